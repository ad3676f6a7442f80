#include "stenonet/config.hpp"

#include <fstream>

#include "stenonet/models.hpp"

namespace stenonet {

void RunConfig::validate() const {
    train.validate();
    augment.validate();
    split.validate();
    mwce.validate();
    if (dropout != 0.0) throw std::invalid_argument("config: dropout is fixed at 0");
    if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw std::invalid_argument("config: bad bn momentum");
    if (eval_seeds < 1) throw std::invalid_argument("config: eval seeds must be >= 1");
    if (finetune_epochs < 1) throw std::invalid_argument("config: finetune epochs must be >= 1");
    Profile::by_name(profile);  // throws on unknown names
}

nlohmann::json RunConfig::to_json() const {
    return nlohmann::json{
        {"profile", profile},
        {"train",
         {{"max_epochs", train.max_epochs},
          {"early_stop_patience", train.early_stop_patience},
          {"lr_reduce_patience", train.lr_reduce_patience},
          {"lr_reduce_factor", train.lr_reduce_factor},
          {"batch_size", train.batch_size},
          {"optimizer", "adam"},
          {"learning_rate", train.learning_rate},
          {"seed", train.seed}}},
        {"augment",
         {{"rotation_deg", augment.rotation_deg},
          {"shear_deg", augment.shear_deg},
          {"shift_frac", augment.shift_frac},
          {"elastic_alpha", augment.elastic_alpha},
          {"elastic_sigma", augment.elastic_sigma},
          {"elastic_enabled", augment.elastic_enabled},
          {"enabled_for_training", augment_training}}},
        {"split", {{"ratios", split.ratios}, {"strata_thresholds", split.thresholds}, {"seed", split.seed}}},
        {"mwce",
         {{"alpha", mwce.alpha},
          {"beta", mwce.beta},
          {"gamma", mwce.gamma},
          {"delta", mwce.delta},
          {"sigma_bell", mwce.sigma_bell},
          {"grad_through_weights", mwce_grad_through_weights}}},
        {"dropout", dropout},
        {"batch_norm", {{"momentum", bn_momentum}, {"epsilon", bn_epsilon}}},
        {"eval", {{"threshold", eval_threshold}, {"seeds", eval_seeds}}},
        {"composed",
         {{"finetune_epochs", finetune_epochs},
          {"warm_start_classifier", finetune_from_standalone},
          {"loc_ckpt", loc_ckpt},
          {"seg_ckpt", seg_ckpt},
          {"cls_ckpt", cls_ckpt}}},
    };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    c.profile = j.value("profile", c.profile);
    if (j.contains("train")) {
        const auto& t = j.at("train");
        c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
        c.train.early_stop_patience = t.value("early_stop_patience", c.train.early_stop_patience);
        c.train.lr_reduce_patience = t.value("lr_reduce_patience", c.train.lr_reduce_patience);
        c.train.lr_reduce_factor = t.value("lr_reduce_factor", c.train.lr_reduce_factor);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
        c.train.seed = t.value("seed", c.train.seed);
        if (t.value("optimizer", "adam") != std::string("adam"))
            throw std::invalid_argument("config: only the adam optimizer is provided");
    }
    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        c.augment.rotation_deg = a.value("rotation_deg", c.augment.rotation_deg);
        c.augment.shear_deg = a.value("shear_deg", c.augment.shear_deg);
        c.augment.shift_frac = a.value("shift_frac", c.augment.shift_frac);
        c.augment.elastic_alpha = a.value("elastic_alpha", c.augment.elastic_alpha);
        c.augment.elastic_sigma = a.value("elastic_sigma", c.augment.elastic_sigma);
        c.augment.elastic_enabled = a.value("elastic_enabled", c.augment.elastic_enabled);
        c.augment_training = a.value("enabled_for_training", c.augment_training);
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        if (s.contains("ratios")) c.split.ratios = s.at("ratios").get<std::array<int, 3>>();
        if (s.contains("strata_thresholds"))
            c.split.thresholds = s.at("strata_thresholds").get<std::vector<double>>();
        c.split.seed = s.value("seed", c.split.seed);
    }
    if (j.contains("mwce")) {
        const auto& m = j.at("mwce");
        c.mwce.alpha = m.value("alpha", c.mwce.alpha);
        c.mwce.beta = m.value("beta", c.mwce.beta);
        c.mwce.gamma = m.value("gamma", c.mwce.gamma);
        c.mwce.delta = m.value("delta", c.mwce.delta);
        c.mwce.sigma_bell = m.value("sigma_bell", c.mwce.sigma_bell);
        c.mwce_grad_through_weights = m.value("grad_through_weights", c.mwce_grad_through_weights);
    }
    c.dropout = j.value("dropout", c.dropout);
    if (j.contains("batch_norm")) {
        c.bn_momentum = j.at("batch_norm").value("momentum", c.bn_momentum);
        c.bn_epsilon = j.at("batch_norm").value("epsilon", c.bn_epsilon);
    }
    if (j.contains("eval")) {
        c.eval_threshold = j.at("eval").value("threshold", c.eval_threshold);
        c.eval_seeds = j.at("eval").value("seeds", c.eval_seeds);
    }
    if (j.contains("composed")) {
        const auto& e = j.at("composed");
        c.finetune_epochs = e.value("finetune_epochs", c.finetune_epochs);
        c.finetune_from_standalone = e.value("warm_start_classifier", c.finetune_from_standalone);
        c.loc_ckpt = e.value("loc_ckpt", c.loc_ckpt);
        c.seg_ckpt = e.value("seg_ckpt", c.seg_ckpt);
        c.cls_ckpt = e.value("cls_ckpt", c.cls_ckpt);
    }
    c.validate();
    return c;
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write config: " + path);
    out << to_json().dump(2) << "\n";
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config not found: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

}  // namespace stenonet
