#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stenonet/config.hpp"
#include "stenonet/metrics.hpp"
#include "stenonet/models.hpp"
#include "stenonet/synthdata.hpp"
#include "stenonet/train.hpp"

namespace stenonet {

enum class SegLossVariant { Dice, Mwce };

const char* seg_variant_name(SegLossVariant v);
SegLossVariant seg_variant_by_name(const std::string& name);

/// The composed three-stage model. Localization and segmentation stages are
/// frozen whenever the composition is trained; only the classifier learns.
struct PipelineModel {
    ModelSpec localizer;
    ModelSpec segmenter;
    ModelSpec classifier;
    SegLossVariant variant = SegLossVariant::Mwce;
    Profile profile;
};

struct StenosisReport {
    BBox box;
    TensorF soft_mask;  // crop coordinates
    double fraction_raw = 0.0;
    double fraction = 0.0;  // clamped to [0, 1] for display
    bool severe = false;    // fraction >= 0.7
    double inference_seconds = 0.0;
};

/// Loads the frozen stages from checkpoints (missing files are an error) and
/// the classifier either from a checkpoint or freshly initialized from
/// `cls_init_seed` when `cls_ckpt` is empty.
PipelineModel assemble(const std::string& loc_ckpt, const std::string& seg_ckpt, const std::string& cls_ckpt,
                       SegLossVariant variant, const Profile& profile, std::uint64_t cls_init_seed = 1);

/// localize -> pool -> select box -> crop -> segment -> classify on the
/// stacked (crop, soft mask) pair. Deterministic per image.
StenosisReport run_end_to_end(const PipelineModel& model, const TensorF& image);

/// Frozen-stage outputs for a set of dataset indices: boxes, crops, soft
/// masks and regression targets. Because the producing stages are frozen,
/// the cache is exact and reusable across fine-tune epochs and seeds.
struct CropCache {
    std::vector<int> indices;
    std::vector<BBox> boxes;
    std::vector<TensorF> crops;
    std::vector<TensorF> soft_masks;
    std::vector<double> target_fraction;
};

/// `localizer == nullptr` selects oracle boxes centered on the true point
/// (stride-aligned, clamped in-bounds).
CropCache build_crop_cache(const ModelSpec* localizer, const ModelSpec& segmenter, const Dataset& ds,
                           const std::vector<int>& indices);

// ---- single-stage training

TrainResult train_localizer_stage(ModelSpec& loc, const Dataset& ds, const RunConfig& cfg,
                                  std::ostream* log = nullptr);
TrainResult train_segmenter_stage(ModelSpec& seg, const Dataset& ds, SegLossVariant variant,
                                  const RunConfig& cfg, std::ostream* log = nullptr);
TrainResult train_classifier_stage(ModelSpec& cls, const Dataset& ds, const RunConfig& cfg,
                                   std::ostream* log = nullptr);

/// Classifier fine-tuning over cached frozen-stage outputs (the composed
/// end-to-end / pre-localized stages).
TrainResult finetune_classifier_on_cache(ModelSpec& cls, const CropCache& train_cache,
                                         const CropCache& val_cache, const RunConfig& cfg, std::uint64_t seed,
                                         int max_epochs, std::ostream* log = nullptr);

/// Test metrics of a classifier over a cache: AUROC / FDR / bias from the
/// predictions, dice of the cached soft masks against the ground truth,
/// containment of the cached boxes.
RunMetrics evaluate_classifier_on_cache(const ModelSpec& cls, const CropCache& cache, const Dataset& ds,
                                        double threshold, std::uint64_t seed);

/// Localization containment of a trained localizer over a split, at the
/// profile box size or an alternate one (e.g. the smaller comparison box).
double localization_containment(const ModelSpec& loc, const Dataset& ds, const std::vector<int>& indices,
                                int box_size);

/// Mean test dice of a segmenter over oracle-localized crops.
double segmentation_dice(const ModelSpec& seg, const Dataset& ds, const std::vector<int>& indices);

/// Evaluation with a localization oracle: crops centered on the true point,
/// then segment + classify.
RunMetrics oracle_localized_eval(const ModelSpec& seg, const ModelSpec& cls, const Dataset& ds,
                                 const std::vector<int>& indices, double threshold);

/// The multi-seed protocol behind `eval --seeds N`: per seed, fine-tune the
/// classifier over the frozen stages (warm-started per config) and evaluate
/// on the test split. `oracle` switches predicted boxes for oracle boxes.
struct SeededEvalResult {
    std::vector<RunMetrics> runs;
    AggregateReport aggregate;
};
SeededEvalResult seeded_composed_eval(const PipelineModel& base, const Dataset& ds, const RunConfig& cfg,
                                      bool oracle, int n_seeds);

/// Overlay rendering: input image with the predicted box outlined and the
/// soft mask tinted, written as RGB.
TensorT<std::uint8_t> render_overlay(const TensorF& image, const StenosisReport& report);

void save_pipeline(PipelineModel& model, const std::string& dir);
PipelineModel load_pipeline(const std::string& dir);

}  // namespace stenonet
