#include "stenonet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stenonet/checkpoint.hpp"
#include "stenonet/gradcheck.hpp"
#include "stenonet/pipeline.hpp"
#include "stenonet/png_io.hpp"

namespace stenonet {

namespace fs = std::filesystem;

namespace {

RunConfig load_config_or_default(const std::string& path, const std::string& profile_flag,
                                 std::uint64_t seed_flag, bool seed_given) {
    RunConfig cfg = path.empty() ? RunConfig{} : RunConfig::load(path);
    if (!profile_flag.empty()) cfg.profile = profile_flag;
    if (seed_given) {
        cfg.train.seed = seed_flag;
        cfg.split.seed = seed_flag;
    }
    cfg.validate();
    return cfg;
}

int cmd_gen(int n, std::uint64_t seed, const std::string& profile_name, const std::string& out_dir) {
    const Profile profile = Profile::by_name(profile_name);
    SplitSpec split;
    split.seed = seed;
    Dataset ds = make_dataset(n, seed, profile.grid, split);
    write_dataset(ds, out_dir);
    std::cout << "wrote " << ds.items.size() << " samples to " << out_dir << "\n";
    return 0;
}

RunMetrics eval_single_stage(const std::string& task, const Dataset& ds, const RunConfig& cfg,
                             std::uint64_t seed) {
    RunConfig run_cfg = cfg;
    run_cfg.train.seed = seed;
    const Profile profile = Profile::by_name(cfg.profile);
    const auto test_idx = ds.indices_of(Split::Test);
    RunMetrics rm;
    rm.seed = seed;
    if (task == "loc") {
        ModelSpec loc = build_localizer(profile, seed + 1);
        train_localizer_stage(loc, ds, run_cfg);
        rm.localization_accuracy = localization_containment(loc, ds, test_idx, profile.grid.box);
    } else if (task == "seg") {
        ModelSpec seg = build_segmenter(profile, seed + 1);
        train_segmenter_stage(seg, ds, SegLossVariant::Dice, run_cfg);
        rm.dice = segmentation_dice(seg, ds, test_idx);
    } else if (task == "cls") {
        ModelSpec cls = build_classifier(profile, seed + 1);
        train_classifier_stage(cls, ds, run_cfg);
        std::vector<double> preds, truths_frac, pred_pct, truth_pct;
        std::vector<int> labels;
        std::vector<double> scores;
        for (int idx : test_idx) {
            const Sample& s = ds.items[static_cast<std::size_t>(idx)].sample;
            const BBox box = centered_box(ds.grid, s.point, ds.grid.box);
            TensorF crop = crop_box(s.image, box);
            TensorF mask(crop.shape);
            Mask gt = crop_box(s.lesion, box);
            for (std::size_t i = 0; i < gt.data.size(); ++i) mask.data[i] = gt.data[i] ? 1.0f : 0.0f;
            const double raw = predict_fraction_raw(cls, crop, mask);
            scores.push_back(raw);
            preds.push_back(raw);
            truths_frac.push_back(s.stenosis_pct / 100.0);
            pred_pct.push_back(raw * 100.0);
            truth_pct.push_back(s.stenosis_pct);
            labels.push_back(s.stenosis_pct >= cfg.eval_threshold * 100.0 ? 1 : 0);
        }
        const AurocResult a = auroc(scores, labels);
        rm.auroc = a.defined ? a.value : 0.5;
        rm.fdr = fdr_at_threshold(preds, truths_frac, cfg.eval_threshold).value;
        rm.assessment_bias = assessment_bias(pred_pct, truth_pct).mean;
    } else {
        throw std::invalid_argument("unknown single-stage task: " + task);
    }
    return rm;
}

int cmd_train(const std::string& task, const std::string& seg_loss, const std::string& config_path,
              const std::string& data_dir, const std::string& out_dir, const std::string& profile_flag,
              std::uint64_t seed_flag, bool seed_given) {
    RunConfig cfg = load_config_or_default(config_path, profile_flag, seed_flag, seed_given);
    const Profile profile = Profile::by_name(cfg.profile);
    Dataset ds = read_dataset(data_dir, profile.grid);
    fs::create_directories(out_dir);
    cfg.save((fs::path(out_dir) / "config.json").string());
    std::ofstream log(fs::path(out_dir) / "history.jsonl", std::ios::trunc);

    if (task == "loc") {
        ModelSpec loc = build_localizer(profile, cfg.train.seed + 1);
        TrainResult tr = train_localizer_stage(loc, ds, cfg, &log);
        save_checkpoint(loc.graph, (fs::path(out_dir) / "loc.ckpt").string());
        std::cout << "localizer: best val " << tr.best_val << " at epoch " << tr.best_epoch << "\n";
    } else if (task == "seg") {
        const SegLossVariant variant = seg_variant_by_name(seg_loss);
        ModelSpec seg = build_segmenter(profile, cfg.train.seed + 1);
        TrainResult tr = train_segmenter_stage(seg, ds, variant, cfg, &log);
        save_checkpoint(seg.graph, (fs::path(out_dir) / "seg.ckpt").string());
        std::cout << "segmenter (" << seg_loss << "): best val " << tr.best_val << " at epoch "
                  << tr.best_epoch << "\n";
    } else if (task == "cls") {
        ModelSpec cls = build_classifier(profile, cfg.train.seed + 1);
        TrainResult tr = train_classifier_stage(cls, ds, cfg, &log);
        save_checkpoint(cls.graph, (fs::path(out_dir) / "cls.ckpt").string());
        std::cout << "classifier: best val " << tr.best_val << " at epoch " << tr.best_epoch << "\n";
    } else if (task == "e2e") {
        const SegLossVariant variant = seg_variant_by_name(seg_loss);
        PipelineModel pm = assemble(cfg.loc_ckpt, cfg.seg_ckpt,
                                    cfg.finetune_from_standalone ? cfg.cls_ckpt : std::string{}, variant,
                                    profile, cfg.train.seed + 1);
        const CropCache train_cache =
            build_crop_cache(&pm.localizer, pm.segmenter, ds, ds.indices_of(Split::Train));
        const CropCache val_cache = build_crop_cache(&pm.localizer, pm.segmenter, ds, ds.indices_of(Split::Val));
        TrainResult tr = finetune_classifier_on_cache(pm.classifier, train_cache, val_cache, cfg,
                                                      cfg.train.seed, cfg.finetune_epochs, &log);
        save_pipeline(pm, out_dir);
        std::cout << "end-to-end (" << seg_loss << "): best val " << tr.best_val << " at epoch "
                  << tr.best_epoch << "\n";
    } else {
        throw std::invalid_argument("unknown task: " + task);
    }
    return 0;
}

int cmd_eval(const std::string& task, const std::string& ckpt, const std::string& config_path,
             const std::string& data_dir, int seeds, const std::string& out_path,
             const std::string& profile_flag, std::uint64_t seed_flag, bool seed_given) {
    RunConfig cfg = load_config_or_default(config_path, profile_flag, seed_flag, seed_given);
    const Profile profile = Profile::by_name(cfg.profile);
    Dataset ds = read_dataset(data_dir, profile.grid);

    std::vector<RunMetrics> runs;
    if (task == "e2e" || task == "oracle") {
        PipelineModel base = load_pipeline(ckpt);
        SeededEvalResult r = seeded_composed_eval(base, ds, cfg, task == "oracle", seeds);
        runs = std::move(r.runs);
    } else {
        for (int s = 0; s < seeds; ++s)
            runs.push_back(eval_single_stage(task, ds, cfg, static_cast<std::uint64_t>(s)));
    }
    const AggregateReport agg = aggregate_runs(runs);
    const std::string report = render_eval_report(runs, agg);
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write report: " + out_path);
        out << report << "\n";
    }
    std::cout << report << "\n";
    return 0;
}

int cmd_overlay(const std::string& ckpt, const std::string& image_path, const std::string& out_path) {
    PipelineModel pm = load_pipeline(ckpt);
    TensorF image = read_png_gray16(image_path);
    image = resize_to(image, pm.profile.grid.image_size);
    image = contrast_standardize(image);
    const StenosisReport report = run_end_to_end(pm, image);
    write_png_rgb(out_path, render_overlay(image, report));
    nlohmann::json j{{"box", {{"row", report.box.row}, {"col", report.box.col}, {"size", report.box.size}}},
                     {"fraction_raw", report.fraction_raw},
                     {"fraction", report.fraction},
                     {"severe", report.severe},
                     {"inference_seconds", report.inference_seconds}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_gradcheck(int instances, double tol, std::uint64_t seed) {
    GradCheckSuite suite = run_grad_check_suite(instances, tol, seed);
    std::map<std::string, std::pair<int, double>> by_what;  // pass count, worst error
    std::map<std::string, int> totals;
    for (const auto& rep : suite.reports) {
        auto& [passes, worst] = by_what[rep.what];
        passes += (rep.pass && !rep.inconclusive) ? 1 : 0;
        worst = std::max(worst, rep.max_rel_error);
        totals[rep.what]++;
    }
    for (const auto& [what, stat] : by_what)
        std::cout << (stat.first == totals[what] ? "PASS " : "FAIL ") << what << ": " << stat.first << "/"
                  << totals[what] << " instances, max rel error " << stat.second << "\n";
    std::cout << (suite.all_pass ? "gradient checks passed" : "GRADIENT CHECKS FAILED") << "\n";
    return suite.all_pass ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"three-stage stenosis analysis on synthetic angiograms"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    int gen_n = 100;
    std::uint64_t gen_seed = 0;
    std::string gen_profile = "desk", gen_out;
    gen->add_option("--n", gen_n, "number of samples")->required();
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--profile", gen_profile, "desk|paper");
    gen->add_option("--out", gen_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train a stage or the composed pipeline");
    std::string tr_task, tr_seg_loss = "dice", tr_config, tr_data, tr_out, tr_profile;
    std::uint64_t tr_seed = 0;
    bool tr_seed_given = false;
    train->add_option("--task", tr_task, "loc|seg|cls|e2e")->required();
    train->add_option("--seg-loss", tr_seg_loss, "dice|mwce");
    train->add_option("--config", tr_config, "config JSON");
    train->add_option("--data", tr_data, "dataset directory")->required();
    train->add_option("--out", tr_out, "output directory")->required();
    train->add_option("--profile", tr_profile, "profile override");
    train->add_option("--seed", tr_seed, "seed override")->each([&](const std::string&) { tr_seed_given = true; });

    // eval
    auto* eval = app.add_subcommand("eval", "multi-seed evaluation protocol");
    std::string ev_task, ev_ckpt, ev_config, ev_data, ev_out, ev_profile;
    int ev_seeds = 5;
    std::uint64_t ev_seed = 0;
    bool ev_seed_given = false;
    eval->add_option("--task", ev_task, "loc|seg|cls|e2e|oracle")->required();
    eval->add_option("--ckpt", ev_ckpt, "pipeline directory (e2e/oracle)");
    eval->add_option("--config", ev_config, "config JSON");
    eval->add_option("--data", ev_data, "dataset directory")->required();
    eval->add_option("--seeds", ev_seeds, "number of seeded runs");
    eval->add_option("--out", ev_out, "report path");
    eval->add_option("--profile", ev_profile, "profile override");
    eval->add_option("--seed", ev_seed, "seed override")->each([&](const std::string&) { ev_seed_given = true; });

    // overlay
    auto* overlay = app.add_subcommand("overlay", "render box + mask over an image");
    std::string ov_ckpt, ov_image, ov_out;
    overlay->add_option("--ckpt", ov_ckpt, "pipeline directory")->required();
    overlay->add_option("--image", ov_image, "input PNG (16-bit gray)")->required();
    overlay->add_option("--out", ov_out, "output PNG")->required();

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    bool gc_all = false;
    int gc_instances = 20;
    double gc_tol = 1e-3;
    std::uint64_t gc_seed = 7;
    gradcheck->add_flag("--all", gc_all, "run the full suite");
    gradcheck->add_option("--instances", gc_instances, "instances per op");
    gradcheck->add_option("--tol", gc_tol, "relative tolerance");
    gradcheck->add_option("--seed", gc_seed, "suite seed");

    std::vector<const char*> argv;
    argv.push_back("stenonet");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_n, gen_seed, gen_profile, gen_out);
        if (train->parsed())
            return cmd_train(tr_task, tr_seg_loss, tr_config, tr_data, tr_out, tr_profile, tr_seed,
                             tr_seed_given);
        if (eval->parsed())
            return cmd_eval(ev_task, ev_ckpt, ev_config, ev_data, ev_seeds, ev_out, ev_profile, ev_seed,
                            ev_seed_given);
        if (overlay->parsed()) return cmd_overlay(ov_ckpt, ov_image, ov_out);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_instances, gc_tol, gc_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace stenonet
