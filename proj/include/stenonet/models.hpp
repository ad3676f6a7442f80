#pragma once

#include <string>
#include <vector>

#include "stenonet/geometry.hpp"
#include "stenonet/graph.hpp"

namespace stenonet {

/// Architecture scale. `paper` is the full-size geometry (512 px images,
/// 192 px crops); `desk` is a reduced 256 px twin with the same 15x15
/// confidence grid that trains in minutes on a CPU; `mini` is a toy size
/// used by end-to-end gradient checks.
struct Profile {
    struct Stage {
        int convs = 1;
        int channels = 8;
    };

    std::string name;
    GridSpec grid;
    std::vector<Stage> loc_stem;   // each stage ends with a 2x2 max-pool
    std::vector<int> loc_tail;     // conv channels at the pooled resolution
    std::vector<int> seg_filters;  // encoder filters, last entry is the bottom block
    std::vector<int> cls_channels; // five conv layers, densely connected
    int cls_pool_stages = 2;       // average-pool transitions after L1/L2
    int silhouette_band_px = 4;

    void validate() const;

    static Profile paper();
    static Profile desk();
    static Profile mini();
    static Profile by_name(const std::string& name);
};

enum class ModelTask { Localizer, Segmenter, Classifier };

const char* model_task_name(ModelTask t);

template <typename T>
struct BuiltGraph {
    GraphT<T> graph;
    int logits = -1;  // pre-activation head output
    int probs = -1;   // sigmoid head where the task defines one
};

/// Grid-confidence localizer: a conv stem (leaky relu, batch norm,
/// residual adds where channels repeat) pooling down to the n x n cell
/// resolution, then a 2x2 valid conv producing the k x k window logits.
template <typename T>
BuiltGraph<T> build_localizer_graph(const Profile& profile, std::uint64_t init_seed);

/// Encoder-decoder segmenter with skip connections; the encoder pools with
/// average pooling, the decoder upsamples (nearest 2x) then convolves.
/// Output is a per-pixel logit map at crop resolution.
template <typename T>
BuiltGraph<T> build_segmenter_graph(const Profile& profile, std::uint64_t init_seed);

/// Five densely connected conv layers over the (image, mask) pair, global
/// max pooling, then one linear unit regressing the stenosis fraction.
template <typename T>
BuiltGraph<T> build_classifier_graph(const Profile& profile, std::uint64_t init_seed);

struct ModelSpec {
    ModelTask task = ModelTask::Localizer;
    Profile profile;
    Graph graph;
    int logits = -1;
    int probs = -1;
};

ModelSpec build_localizer(const Profile& profile, std::uint64_t init_seed);
ModelSpec build_segmenter(const Profile& profile, std::uint64_t init_seed);
ModelSpec build_classifier(const Profile& profile, std::uint64_t init_seed);

/// Single-image inference (batch of one, running batch-norm statistics);
/// deterministic and independent of any other image.
ConfidenceGrid predict_confidence(const ModelSpec& localizer, const TensorF& image);
TensorF predict_soft_mask(const ModelSpec& segmenter, const TensorF& crop);
/// Raw linear output; clamp only for display.
double predict_fraction_raw(const ModelSpec& classifier, const TensorF& crop, const TensorF& soft_mask);

/// Batch packing: 2-d [H,W] images into [N,1,H,W] / channel pairs into
/// [N,2,H,W].
TensorF batch_images(const std::vector<const TensorF*>& images);
TensorF batch_pairs(const std::vector<std::pair<const TensorF*, const TensorF*>>& pairs);

}  // namespace stenonet
