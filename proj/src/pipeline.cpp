#include "stenonet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "stenonet/checkpoint.hpp"

namespace stenonet {

namespace fs = std::filesystem;

const char* seg_variant_name(SegLossVariant v) { return v == SegLossVariant::Dice ? "dice" : "mwce"; }

SegLossVariant seg_variant_by_name(const std::string& name) {
    if (name == "dice") return SegLossVariant::Dice;
    if (name == "mwce") return SegLossVariant::Mwce;
    throw std::invalid_argument("unknown segmentation loss variant: " + name);
}

namespace {

TensorF slice_plane(const TensorF& batch, int n) {
    const int h = batch.shape[2], w = batch.shape[3];
    TensorF out({h, w});
    std::copy_n(batch.data.data() + static_cast<std::size_t>(n) * h * w, static_cast<std::size_t>(h) * w,
                out.data.data());
    return out;
}

void scatter_plane_grad(TensorF& upstream, int n, const TensorF& g, float scale) {
    const std::size_t plane = g.data.size();
    float* dst = upstream.data.data() + static_cast<std::size_t>(n) * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = g.data[i] * scale;
}

TensorF mask_to_float(const Mask& m) {
    TensorF out(m.shape);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i] ? 1.0f : 0.0f;
    return out;
}

struct SegCropped {
    TensorF image;
    Mask lesion, silhouette;
    PixelPoint center;
};

SegCropped oracle_crop(const Sample& sample, const GridSpec& grid) {
    const BBox box = centered_box(grid, sample.point, grid.box);
    SegCropped out;
    out.image = crop_box(sample.image, box);
    out.lesion = crop_box(sample.lesion, box);
    out.silhouette = crop_box(sample.silhouette, box);
    PixelPoint p;
    if (!to_crop_coords(sample.point, box, &p)) throw std::logic_error("oracle box lost the point");
    out.center = p;
    return out;
}

double validation_mean(const std::vector<int>& indices, int chunk,
                       const std::function<double(const std::vector<int>&)>& mean_of_chunk) {
    double acc = 0.0;
    std::size_t done = 0;
    while (done < indices.size()) {
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(chunk), indices.size() - done);
        std::vector<int> part(indices.begin() + static_cast<std::ptrdiff_t>(done),
                              indices.begin() + static_cast<std::ptrdiff_t>(done + take));
        acc += mean_of_chunk(part) * static_cast<double>(take);
        done += take;
    }
    return acc / static_cast<double>(indices.size());
}

}  // namespace

PipelineModel assemble(const std::string& loc_ckpt, const std::string& seg_ckpt, const std::string& cls_ckpt,
                       SegLossVariant variant, const Profile& profile, std::uint64_t cls_init_seed) {
    PipelineModel pm;
    pm.profile = profile;
    pm.variant = variant;
    pm.localizer = build_localizer(profile, 0);
    pm.segmenter = build_segmenter(profile, 0);
    pm.classifier = build_classifier(profile, cls_init_seed);
    try {
        load_checkpoint(pm.localizer.graph, loc_ckpt);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("localization stage: ") + e.what());
    }
    try {
        load_checkpoint(pm.segmenter.graph, seg_ckpt);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("segmentation stage: ") + e.what());
    }
    if (!cls_ckpt.empty()) {
        try {
            load_checkpoint(pm.classifier.graph, cls_ckpt);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("classification stage: ") + e.what());
        }
    }
    pm.localizer.graph.set_all_frozen(true);
    pm.segmenter.graph.set_all_frozen(true);
    return pm;
}

StenosisReport run_end_to_end(const PipelineModel& model, const TensorF& image) {
    const auto t0 = std::chrono::steady_clock::now();
    StenosisReport report;
    try {
        const ConfidenceGrid conf = predict_confidence(model.localizer, image);
        const PooledGrid pooled = pool_to_nonoverlap(model.profile.grid, conf);
        report.box = select_bbox(model.profile.grid, pooled);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("localization stage: ") + e.what());
    }
    TensorF crop;
    try {
        crop = crop_box(image, report.box);
        report.soft_mask = predict_soft_mask(model.segmenter, crop);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("segmentation stage: ") + e.what());
    }
    try {
        report.fraction_raw = predict_fraction_raw(model.classifier, crop, report.soft_mask);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("classification stage: ") + e.what());
    }
    report.fraction = std::clamp(report.fraction_raw, 0.0, 1.0);
    report.severe = report.fraction >= 0.7;
    report.inference_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

CropCache build_crop_cache(const ModelSpec* localizer, const ModelSpec& segmenter, const Dataset& ds,
                           const std::vector<int>& indices) {
    CropCache cache;
    cache.indices = indices;
    for (int idx : indices) {
        const Sample& sample = ds.items[static_cast<std::size_t>(idx)].sample;
        BBox box;
        if (localizer) {
            const ConfidenceGrid conf = predict_confidence(*localizer, sample.image);
            box = select_bbox(ds.grid, pool_to_nonoverlap(ds.grid, conf));
        } else {
            box = centered_box(ds.grid, sample.point, ds.grid.box);
        }
        TensorF crop = crop_box(sample.image, box);
        cache.soft_masks.push_back(predict_soft_mask(segmenter, crop));
        cache.crops.push_back(std::move(crop));
        cache.boxes.push_back(box);
        cache.target_fraction.push_back(sample.stenosis_pct / 100.0);
    }
    return cache;
}

TrainResult train_localizer_stage(ModelSpec& loc, const Dataset& ds, const RunConfig& cfg, std::ostream* log) {
    const auto train_idx = ds.indices_of(Split::Train);
    const auto val_idx = ds.indices_of(Split::Val);
    if (train_idx.empty() || val_idx.empty()) throw std::invalid_argument("train: empty split");
    const GridSpec grid = ds.grid;
    const double w_pos = grid.pos_weight();

    auto batch_loss = [&](const std::vector<int>& items, bool training, Rng* rng, StepResult* out) {
        std::vector<TensorF> imgs;
        std::vector<LabelGrid> labels;
        imgs.reserve(items.size());
        for (int idx : items) {
            const Sample& base = ds.items[static_cast<std::size_t>(idx)].sample;
            if (training && cfg.augment_training && rng) {
                Sample aug = augment(base, cfg.augment, *rng);
                imgs.push_back(aug.image);
                labels.push_back(region_label_grid(grid, aug.point));
            } else {
                imgs.push_back(base.image);
                labels.push_back(region_label_grid(grid, base.point));
            }
        }
        std::vector<const TensorF*> ptrs;
        for (const auto& im : imgs) ptrs.push_back(&im);
        const TensorF input = batch_images(ptrs);
        Tape<float> tape = loc.graph.forward({{"image", input}}, training ? Mode::Training : Mode::Inference);
        const TensorF& logits = tape.vals[static_cast<std::size_t>(loc.logits)];
        const int n = logits.shape[0];
        double total = 0.0;
        TensorF upstream(logits.shape);
        for (int i = 0; i < n; ++i) {
            TensorF item = slice_plane(logits, i);
            auto lg = weighted_grid_bce(item, labels[static_cast<std::size_t>(i)], w_pos);
            total += lg.value;
            if (out) scatter_plane_grad(upstream, i, lg.grad, 1.0f / static_cast<float>(n));
        }
        if (out) {
            out->loss = total / n;
            out->grads = loc.graph.backward(tape, loc.logits, upstream);
            loc.graph.commit_bn_updates(tape);
        }
        return total / n;
    };

    StepFn step = [&](const std::vector<int>& batch, Rng& rng) {
        std::vector<int> items;
        for (int b : batch) items.push_back(train_idx[static_cast<std::size_t>(b)]);
        StepResult sr;
        batch_loss(items, true, &rng, &sr);
        return sr;
    };
    ValidateFn validate = [&]() {
        return validation_mean(val_idx, 16,
                               [&](const std::vector<int>& part) { return batch_loss(part, false, nullptr, nullptr); });
    };
    return run_training(loc.graph, cfg.train, static_cast<int>(train_idx.size()), step, validate, log);
}

TrainResult train_segmenter_stage(ModelSpec& seg, const Dataset& ds, SegLossVariant variant,
                                  const RunConfig& cfg, std::ostream* log) {
    const auto train_idx = ds.indices_of(Split::Train);
    const auto val_idx = ds.indices_of(Split::Val);
    if (train_idx.empty() || val_idx.empty()) throw std::invalid_argument("train: empty split");
    const GridSpec grid = ds.grid;

    auto item_loss = [&](const TensorF& logits_item, const SegCropped& c) {
        if (variant == SegLossVariant::Dice) return dice_loss_on_logits(logits_item, c.lesion);
        return mwce_loss(logits_item, c.lesion, c.silhouette, c.center, cfg.mwce,
                         cfg.mwce_grad_through_weights);
    };

    auto batch_loss = [&](const std::vector<int>& items, bool training, Rng* rng, StepResult* out) {
        std::vector<SegCropped> crops;
        for (int idx : items) {
            const Sample& base = ds.items[static_cast<std::size_t>(idx)].sample;
            if (training && cfg.augment_training && rng) {
                crops.push_back(oracle_crop(augment(base, cfg.augment, *rng), grid));
            } else {
                crops.push_back(oracle_crop(base, grid));
            }
        }
        std::vector<const TensorF*> ptrs;
        for (const auto& c : crops) ptrs.push_back(&c.image);
        const TensorF input = batch_images(ptrs);
        Tape<float> tape = seg.graph.forward({{"image", input}}, training ? Mode::Training : Mode::Inference);
        const TensorF& logits = tape.vals[static_cast<std::size_t>(seg.logits)];
        const int n = logits.shape[0];
        double total = 0.0;
        TensorF upstream(logits.shape);
        for (int i = 0; i < n; ++i) {
            TensorF item = slice_plane(logits, i);
            auto lg = item_loss(item, crops[static_cast<std::size_t>(i)]);
            total += lg.value;
            if (out) scatter_plane_grad(upstream, i, lg.grad, 1.0f / static_cast<float>(n));
        }
        if (out) {
            out->loss = total / n;
            out->grads = seg.graph.backward(tape, seg.logits, upstream);
            seg.graph.commit_bn_updates(tape);
        }
        return total / n;
    };

    StepFn step = [&](const std::vector<int>& batch, Rng& rng) {
        std::vector<int> items;
        for (int b : batch) items.push_back(train_idx[static_cast<std::size_t>(b)]);
        StepResult sr;
        batch_loss(items, true, &rng, &sr);
        return sr;
    };
    ValidateFn validate = [&]() {
        return validation_mean(val_idx, 8,
                               [&](const std::vector<int>& part) { return batch_loss(part, false, nullptr, nullptr); });
    };
    return run_training(seg.graph, cfg.train, static_cast<int>(train_idx.size()), step, validate, log);
}

namespace {

// shared by standalone classification (ground-truth masks) and cache-backed
// fine-tuning (predicted soft masks)
TrainResult train_classifier_core(ModelSpec& cls, const TrainConfig& tcfg, int n_train,
                                  const std::function<void(const std::vector<int>&, bool, Rng*,
                                                           std::vector<std::pair<const TensorF*, const TensorF*>>&,
                                                           std::vector<double>&,
                                                           std::vector<TensorF>&)>& gather,
                                  const std::vector<int>& val_positions, std::ostream* log) {
    auto batch_loss = [&](const std::vector<int>& positions, bool training, Rng* rng, StepResult* out) {
        std::vector<std::pair<const TensorF*, const TensorF*>> pairs;
        std::vector<double> targets;
        std::vector<TensorF> storage;
        gather(positions, training, rng, pairs, targets, storage);
        const TensorF input = batch_pairs(pairs);
        Tape<float> tape = cls.graph.forward({{"pair", input}}, training ? Mode::Training : Mode::Inference);
        const TensorF& preds = tape.vals[static_cast<std::size_t>(cls.logits)];
        TensorF target_t({preds.shape[0], 1});
        for (int i = 0; i < preds.shape[0]; ++i)
            target_t.data[static_cast<std::size_t>(i)] = static_cast<float>(targets[static_cast<std::size_t>(i)]);
        auto lg = mse_loss(preds, target_t);
        if (out) {
            out->loss = lg.value;
            out->grads = cls.graph.backward(tape, cls.logits, lg.grad);
            cls.graph.commit_bn_updates(tape);
        }
        return lg.value;
    };

    StepFn step = [&](const std::vector<int>& batch, Rng& rng) {
        StepResult sr;
        batch_loss(batch, true, &rng, &sr);
        return sr;
    };
    ValidateFn validate = [&]() {
        return validation_mean(val_positions, 16, [&](const std::vector<int>& part) {
            return batch_loss(part, false, nullptr, nullptr);
        });
    };
    return run_training(cls.graph, tcfg, n_train, step, validate, log);
}

}  // namespace

TrainResult train_classifier_stage(ModelSpec& cls, const Dataset& ds, const RunConfig& cfg, std::ostream* log) {
    const auto train_idx = ds.indices_of(Split::Train);
    const auto val_idx = ds.indices_of(Split::Val);
    if (train_idx.empty() || val_idx.empty()) throw std::invalid_argument("train: empty split");
    const GridSpec grid = ds.grid;

    auto gather = [&](const std::vector<int>& positions, bool training, Rng* rng,
                      std::vector<std::pair<const TensorF*, const TensorF*>>& pairs,
                      std::vector<double>& targets, std::vector<TensorF>& storage) {
        storage.reserve(positions.size() * 2);
        for (int pos : positions) {
            const int idx = training ? train_idx[static_cast<std::size_t>(pos)]
                                     : val_idx[static_cast<std::size_t>(pos)];
            const Sample& base = ds.items[static_cast<std::size_t>(idx)].sample;
            SegCropped c;
            if (training && cfg.augment_training && rng)
                c = oracle_crop(augment(base, cfg.augment, *rng), grid);
            else
                c = oracle_crop(base, grid);
            storage.push_back(std::move(c.image));
            storage.push_back(mask_to_float(c.lesion));
            targets.push_back(base.stenosis_pct / 100.0);
        }
        for (std::size_t i = 0; i < positions.size(); ++i)
            pairs.emplace_back(&storage[2 * i], &storage[2 * i + 1]);
    };

    std::vector<int> val_positions(val_idx.size());
    std::iota(val_positions.begin(), val_positions.end(), 0);
    return train_classifier_core(cls, cfg.train, static_cast<int>(train_idx.size()), gather, val_positions,
                                 log);
}

TrainResult finetune_classifier_on_cache(ModelSpec& cls, const CropCache& train_cache,
                                         const CropCache& val_cache, const RunConfig& cfg, std::uint64_t seed,
                                         int max_epochs, std::ostream* log) {
    if (train_cache.indices.empty() || val_cache.indices.empty())
        throw std::invalid_argument("finetune: empty split");
    TrainConfig tcfg = cfg.train;
    tcfg.seed = seed;
    tcfg.max_epochs = max_epochs;

    auto gather = [&](const std::vector<int>& positions, bool training, Rng*,
                      std::vector<std::pair<const TensorF*, const TensorF*>>& pairs,
                      std::vector<double>& targets, std::vector<TensorF>&) {
        const CropCache& cache = training ? train_cache : val_cache;
        for (int pos : positions) {
            pairs.emplace_back(&cache.crops[static_cast<std::size_t>(pos)],
                               &cache.soft_masks[static_cast<std::size_t>(pos)]);
            targets.push_back(cache.target_fraction[static_cast<std::size_t>(pos)]);
        }
    };

    std::vector<int> val_positions(val_cache.indices.size());
    std::iota(val_positions.begin(), val_positions.end(), 0);
    return train_classifier_core(cls, tcfg, static_cast<int>(train_cache.indices.size()), gather,
                                 val_positions, log);
}

RunMetrics evaluate_classifier_on_cache(const ModelSpec& cls, const CropCache& cache, const Dataset& ds,
                                        double threshold, std::uint64_t seed) {
    RunMetrics rm;
    rm.seed = seed;
    std::vector<double> scores, pred_fraction, truth_fraction, pred_pct, truth_pct;
    std::vector<int> labels;
    std::vector<BBox> boxes;
    std::vector<PixelPoint> points;
    double dice_acc = 0.0;
    for (std::size_t i = 0; i < cache.indices.size(); ++i) {
        const auto& item = ds.items[static_cast<std::size_t>(cache.indices[i])];
        const double raw = predict_fraction_raw(cls, cache.crops[i], cache.soft_masks[i]);
        scores.push_back(raw);
        pred_fraction.push_back(raw);
        truth_fraction.push_back(item.sample.stenosis_pct / 100.0);
        pred_pct.push_back(raw * 100.0);
        truth_pct.push_back(item.sample.stenosis_pct);
        labels.push_back(item.sample.stenosis_pct >= threshold * 100.0 ? 1 : 0);
        boxes.push_back(cache.boxes[i]);
        points.push_back(item.sample.point);
        dice_acc += dice_coefficient(cache.soft_masks[i], crop_box(item.sample.lesion, cache.boxes[i]));
    }
    rm.localization_accuracy = localization_accuracy(boxes, points);
    rm.dice = dice_acc / static_cast<double>(cache.indices.size());
    const AurocResult a = auroc(scores, labels);
    rm.auroc = a.defined ? a.value : 0.5;
    rm.fdr = fdr_at_threshold(pred_fraction, truth_fraction, threshold).value;
    rm.assessment_bias = assessment_bias(pred_pct, truth_pct).mean;
    return rm;
}

double localization_containment(const ModelSpec& loc, const Dataset& ds, const std::vector<int>& indices,
                                int box_size) {
    std::vector<BBox> boxes;
    std::vector<PixelPoint> points;
    for (int idx : indices) {
        const Sample& sample = ds.items[static_cast<std::size_t>(idx)].sample;
        const ConfidenceGrid conf = predict_confidence(loc, sample.image);
        boxes.push_back(select_bbox(ds.grid, pool_to_nonoverlap(ds.grid, conf), box_size));
        points.push_back(sample.point);
    }
    return localization_accuracy(boxes, points);
}

double segmentation_dice(const ModelSpec& seg, const Dataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("segmentation_dice: empty index set");
    double acc = 0.0;
    for (int idx : indices) {
        const Sample& sample = ds.items[static_cast<std::size_t>(idx)].sample;
        const BBox box = centered_box(ds.grid, sample.point, ds.grid.box);
        const TensorF soft = predict_soft_mask(seg, crop_box(sample.image, box));
        acc += dice_coefficient(soft, crop_box(sample.lesion, box));
    }
    return acc / static_cast<double>(indices.size());
}

RunMetrics oracle_localized_eval(const ModelSpec& seg, const ModelSpec& cls, const Dataset& ds,
                                 const std::vector<int>& indices, double threshold) {
    CropCache cache = build_crop_cache(nullptr, seg, ds, indices);
    return evaluate_classifier_on_cache(cls, cache, ds, threshold, 0);
}

SeededEvalResult seeded_composed_eval(const PipelineModel& base, const Dataset& ds, const RunConfig& cfg,
                                      bool oracle, int n_seeds) {
    const ModelSpec* loc = oracle ? nullptr : &base.localizer;
    const CropCache train_cache = build_crop_cache(loc, base.segmenter, ds, ds.indices_of(Split::Train));
    const CropCache val_cache = build_crop_cache(loc, base.segmenter, ds, ds.indices_of(Split::Val));
    const CropCache test_cache = build_crop_cache(loc, base.segmenter, ds, ds.indices_of(Split::Test));

    SeededEvalResult out;
    for (int s = 0; s < n_seeds; ++s) {
        ModelSpec cls = cfg.finetune_from_standalone
                            ? base.classifier
                            : build_classifier(base.profile, static_cast<std::uint64_t>(s) + 101);
        finetune_classifier_on_cache(cls, train_cache, val_cache, cfg, static_cast<std::uint64_t>(s),
                                     cfg.finetune_epochs);
        out.runs.push_back(evaluate_classifier_on_cache(cls, test_cache, ds, cfg.eval_threshold,
                                                        static_cast<std::uint64_t>(s)));
    }
    out.aggregate = aggregate_runs(out.runs);
    return out;
}

TensorT<std::uint8_t> render_overlay(const TensorF& image, const StenosisReport& report) {
    const int h = image.dim(0), w = image.dim(1);
    TensorT<std::uint8_t> rgb({h, w, 3});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const auto v = static_cast<std::uint8_t>(std::clamp(image.at(i, j), 0.0f, 1.0f) * 255.0f);
            rgb.data[(static_cast<std::size_t>(i) * w + j) * 3 + 0] = v;
            rgb.data[(static_cast<std::size_t>(i) * w + j) * 3 + 1] = v;
            rgb.data[(static_cast<std::size_t>(i) * w + j) * 3 + 2] = v;
        }
    // soft mask tint (green) inside the box
    const BBox& b = report.box;
    for (int i = 0; i < b.size; ++i)
        for (int j = 0; j < b.size; ++j) {
            if (report.soft_mask.at(i, j) < 0.5f) continue;
            const int r = b.row + i, c = b.col + j;
            auto* px = &rgb.data[(static_cast<std::size_t>(r) * w + c) * 3];
            px[1] = static_cast<std::uint8_t>(std::min(255, px[1] + 90));
        }
    // box outline (red, 2 px)
    auto paint_red = [&](int r, int c) {
        if (r < 0 || r >= h || c < 0 || c >= w) return;
        auto* px = &rgb.data[(static_cast<std::size_t>(r) * w + c) * 3];
        px[0] = 255;
        px[1] = static_cast<std::uint8_t>(px[1] / 3);
        px[2] = static_cast<std::uint8_t>(px[2] / 3);
    };
    for (int t = 0; t < 2; ++t)
        for (int i = 0; i < b.size; ++i) {
            paint_red(b.row + i, b.col + t);
            paint_red(b.row + i, b.col + b.size - 1 - t);
            paint_red(b.row + t, b.col + i);
            paint_red(b.row + b.size - 1 - t, b.col + i);
        }
    return rgb;
}

void save_pipeline(PipelineModel& model, const std::string& dir) {
    fs::create_directories(dir);
    save_checkpoint(model.localizer.graph, (fs::path(dir) / "loc.ckpt").string());
    save_checkpoint(model.segmenter.graph, (fs::path(dir) / "seg.ckpt").string());
    save_checkpoint(model.classifier.graph, (fs::path(dir) / "cls.ckpt").string());
    nlohmann::json j{{"profile", model.profile.name}, {"seg_loss", seg_variant_name(model.variant)}};
    std::ofstream out(fs::path(dir) / "pipeline.json", std::ios::trunc);
    out << j.dump(2) << "\n";
}

PipelineModel load_pipeline(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "pipeline.json");
    if (!in) throw std::runtime_error("no pipeline.json in " + dir);
    nlohmann::json j;
    in >> j;
    const Profile profile = Profile::by_name(j.at("profile").get<std::string>());
    return assemble((fs::path(dir) / "loc.ckpt").string(), (fs::path(dir) / "seg.ckpt").string(),
                    (fs::path(dir) / "cls.ckpt").string(), seg_variant_by_name(j.at("seg_loss").get<std::string>()),
                    profile);
}

}  // namespace stenonet
