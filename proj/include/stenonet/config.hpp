#pragma once

#include <string>

#include <json.hpp>

#include "stenonet/losses.hpp"
#include "stenonet/synthdata.hpp"
#include "stenonet/train.hpp"

namespace stenonet {

/// Every hyperparameter of a run in one serializable bundle. Defaults are
/// the training recipe the networks were designed for: 100 epochs max,
/// early stop patience 20, 5x learning-rate reduction on a 5-epoch plateau,
/// batch size 2, dropout fixed at 0, the +/-7 degree / 0.04-shift
/// augmentation ranges, 70:15:15 stratified split and the
/// alpha/beta/gamma/delta/sigma weighting constants.
struct RunConfig {
    std::string profile = "desk";
    TrainConfig train;
    AugmentConfig augment;
    SplitSpec split;
    MwceParams mwce;
    double dropout = 0.0;  // fixed at 0
    double bn_momentum = 0.9;
    double bn_epsilon = 1e-5;
    double eval_threshold = 0.7;
    int eval_seeds = 5;
    int finetune_epochs = 4;          // classifier epochs in composed stages
    bool finetune_from_standalone = true;  // warm-start vs fresh classifier
    bool mwce_grad_through_weights = true;
    bool augment_training = true;     // train-split augmentation for single stages
    std::string loc_ckpt, seg_ckpt, cls_ckpt;

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    void save(const std::string& path) const;
    static RunConfig load(const std::string& path);
};

}  // namespace stenonet
