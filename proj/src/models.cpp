#include "stenonet/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace stenonet {

void Profile::validate() const {
    grid.validate();
    if (loc_stem.empty() || loc_tail.empty()) throw std::invalid_argument("profile: empty localizer plan");
    int spatial = grid.image_size;
    for (std::size_t i = 0; i < loc_stem.size(); ++i) spatial /= 2;
    if (spatial != grid.n())
        throw std::invalid_argument("profile '" + name + "': localizer pooling reaches " +
                                    std::to_string(spatial) + " cells but the grid needs " +
                                    std::to_string(grid.n()));
    if (seg_filters.size() < 2) throw std::invalid_argument("profile: segmenter needs >= 2 blocks");
    int crop = grid.box;
    for (std::size_t i = 0; i + 1 < seg_filters.size(); ++i) {
        if (crop % 2) throw std::invalid_argument("profile: crop not divisible through segmenter pools");
        crop /= 2;
    }
    if (crop < 2) throw std::invalid_argument("profile: segmenter bottom collapses below 2 px");
    if (cls_channels.size() != 5) throw std::invalid_argument("profile: classifier wants exactly 5 conv layers");
    int cls = grid.box;
    for (int i = 0; i < cls_pool_stages; ++i) {
        if (cls % 2) throw std::invalid_argument("profile: crop not divisible through classifier pools");
        cls /= 2;
    }
    if (cls < 2) throw std::invalid_argument("profile: classifier resolution collapses");
}

Profile Profile::paper() {
    Profile p;
    p.name = "paper";
    p.grid = GridSpec::paper();
    p.loc_stem = {{2, 8}, {2, 16}, {3, 32}, {4, 64}, {4, 96}};
    p.loc_tail = {128, 128, 128, 128, 128, 128};
    p.seg_filters = {32, 64, 128, 256, 512};
    p.cls_channels = {32, 48, 64, 80, 96};
    p.cls_pool_stages = 2;
    p.silhouette_band_px = 8;
    p.validate();
    return p;
}

Profile Profile::desk() {
    Profile p;
    p.name = "desk";
    p.grid = GridSpec::desk();
    p.loc_stem = {{1, 8}, {1, 16}, {1, 32}, {1, 32}};
    p.loc_tail = {64, 64, 64};
    p.seg_filters = {16, 32, 64, 128};
    p.cls_channels = {16, 24, 32, 40, 48};
    p.cls_pool_stages = 2;
    p.silhouette_band_px = 4;
    p.validate();
    return p;
}

Profile Profile::mini() {
    Profile p;
    p.name = "mini";
    p.grid = GridSpec{16, 4, 2, 8};
    p.loc_stem = {{1, 4}};
    p.loc_tail = {6, 6};
    p.seg_filters = {4, 8};
    p.cls_channels = {4, 4, 6, 6, 8};
    p.cls_pool_stages = 1;
    p.silhouette_band_px = 1;
    p.validate();
    return p;
}

Profile Profile::by_name(const std::string& name) {
    if (name == "paper") return paper();
    if (name == "desk") return desk();
    if (name == "mini") return mini();
    throw std::invalid_argument("unknown profile: " + name);
}

const char* model_task_name(ModelTask t) {
    switch (t) {
        case ModelTask::Localizer: return "localizer";
        case ModelTask::Segmenter: return "segmenter";
        case ModelTask::Classifier: return "classifier";
    }
    return "?";
}

namespace {

/// Appends conv / batch-norm / activation blocks with He-initialized
/// weights and sequential names.
template <typename T>
class NetBuilder {
public:
    NetBuilder(GraphT<T>& g, std::string prefix, std::uint64_t seed)
        : g_(g), prefix_(std::move(prefix)), rng_(seed) {}

    int conv_raw(int x, int cout, int k, int stride, int pad) {
        const int cin = g_.out_shape(x)[1];
        const int idx = ++conv_idx_;
        OpAttrs a;
        a.kernel_h = a.kernel_w = k;
        a.stride = stride;
        a.pad = pad;
        const double fan_in = static_cast<double>(cin) * k * k;
        int w = g_.param(name("c", idx, ".w"), prefix_, he_normal({cout, cin, k, k}, fan_in));
        int b = g_.param(name("c", idx, ".b"), prefix_, TensorT<T>({cout}));
        return g_.op(OpKind::Conv2d, {x, w, b}, a);
    }

    // conv 3x3 same + batch norm + activation, with a residual add when the
    // channel count is unchanged
    int conv_block(int x, int cout, bool leaky, bool allow_residual = true, int k = 3, int stride = 1) {
        const int cin = g_.out_shape(x)[1];
        int y = conv_raw(x, cout, k, stride, (k - 1) / 2);
        y = batch_norm(y);
        OpAttrs act;
        act.leak = 0.1;
        y = g_.op(leaky ? OpKind::LeakyRelu : OpKind::Relu, {y}, act);
        if (allow_residual && cin == cout && stride == 1) y = g_.op(OpKind::Add, {y, x});
        return y;
    }

    int batch_norm(int x) {
        const int c = g_.out_shape(x)[1];
        const int idx = ++bn_idx_;
        int gamma = g_.param(name("bn", idx, ".gamma"), prefix_, TensorT<T>({c}, T(1)));
        int beta = g_.param(name("bn", idx, ".beta"), prefix_, TensorT<T>({c}));
        return g_.op(OpKind::BatchNorm, {x, gamma, beta}, {}, name("bn", idx, ""));
    }

    int max_pool(int x) {
        OpAttrs a;
        a.kernel_h = a.kernel_w = 2;
        a.stride = 2;
        return g_.op(OpKind::MaxPool2d, {x}, a);
    }

    int avg_pool(int x) {
        OpAttrs a;
        a.kernel_h = a.kernel_w = 2;
        a.stride = 2;
        return g_.op(OpKind::AvgPool2d, {x}, a);
    }

    int dense(int x, int out) {
        const int fin = g_.out_shape(x)[1];
        int w = g_.param(prefix_ + ".fc.w", prefix_, he_normal({out, fin}, fin));
        int b = g_.param(prefix_ + ".fc.b", prefix_, TensorT<T>({out}));
        return g_.op(OpKind::Dense, {x, w, b});
    }

private:
    std::string name(const char* stem, int idx, const char* suffix) const {
        return prefix_ + "." + stem + std::to_string(idx) + suffix;
    }

    TensorT<T> he_normal(std::vector<int> shape, double fan_in) {
        TensorT<T> t(std::move(shape));
        const double stddev = std::sqrt(2.0 / fan_in);
        for (auto& v : t.data) v = static_cast<T>(stddev * rng_.normal());
        return t;
    }

    GraphT<T>& g_;
    std::string prefix_;
    Rng rng_;
    int conv_idx_ = 0;
    int bn_idx_ = 0;
};

}  // namespace

template <typename T>
BuiltGraph<T> build_localizer_graph(const Profile& profile, std::uint64_t init_seed) {
    profile.validate();
    BuiltGraph<T> built;
    auto& g = built.graph;
    NetBuilder<T> nb(g, "loc", init_seed);

    int x = g.input("image", {-1, 1, profile.grid.image_size, profile.grid.image_size});
    for (const auto& stage : profile.loc_stem) {
        for (int i = 0; i < stage.convs; ++i) x = nb.conv_block(x, stage.channels, /*leaky=*/true);
        x = nb.max_pool(x);
    }
    for (int ch : profile.loc_tail) x = nb.conv_block(x, ch, /*leaky=*/true);
    // 2x2 valid conv turns the n x n cell map into the k x k window logits
    built.logits = nb.conv_raw(x, 1, 2, 1, 0);
    built.probs = g.op(OpKind::Sigmoid, {built.logits});

    const auto& s = g.out_shape(built.logits);
    if (s[2] != profile.grid.k() || s[3] != profile.grid.k())
        throw std::logic_error("localizer head does not produce a k x k grid");
    return built;
}

template <typename T>
BuiltGraph<T> build_segmenter_graph(const Profile& profile, std::uint64_t init_seed) {
    profile.validate();
    BuiltGraph<T> built;
    auto& g = built.graph;
    NetBuilder<T> nb(g, "seg", init_seed);

    const int blocks = static_cast<int>(profile.seg_filters.size());
    int x = g.input("image", {-1, 1, profile.grid.box, profile.grid.box});
    std::vector<int> skips;
    for (int i = 0; i + 1 < blocks; ++i) {
        const int f = profile.seg_filters[static_cast<std::size_t>(i)];
        x = nb.conv_block(x, f, /*leaky=*/false);
        x = nb.conv_block(x, f, /*leaky=*/false);
        skips.push_back(x);
        x = nb.avg_pool(x);
    }
    const int bottom = profile.seg_filters.back();
    x = nb.conv_block(x, bottom, false);
    x = nb.conv_block(x, bottom, false);
    for (int i = blocks - 2; i >= 0; --i) {
        const int f = profile.seg_filters[static_cast<std::size_t>(i)];
        x = g.op(OpKind::UpsampleNearest2x, {x});
        x = nb.conv_block(x, f, false, /*allow_residual=*/false);
        x = g.op(OpKind::ConcatChannels, {x, skips[static_cast<std::size_t>(i)]});
        x = nb.conv_block(x, f, false, /*allow_residual=*/false);
    }
    built.logits = nb.conv_raw(x, 1, 1, 1, 0);
    built.probs = g.op(OpKind::Sigmoid, {built.logits});
    return built;
}

template <typename T>
BuiltGraph<T> build_classifier_graph(const Profile& profile, std::uint64_t init_seed) {
    profile.validate();
    BuiltGraph<T> built;
    auto& g = built.graph;
    NetBuilder<T> nb(g, "cls", init_seed);

    int x = g.input("pair", {-1, 2, profile.grid.box, profile.grid.box});

    // densely connected: layer i consumes the concatenation of all previous
    // layer outputs, each average-pooled down to layer i's resolution
    struct Out {
        int node;
        int level;
    };
    std::vector<Out> outputs;
    std::map<std::pair<std::size_t, int>, int> pooled;  // (output idx, level) -> node
    auto bring_to_level = [&](std::size_t idx, int target) {
        int node = outputs[idx].node;
        for (int lv = outputs[idx].level; lv < target; ++lv) {
            auto key = std::make_pair(idx, lv + 1);
            auto it = pooled.find(key);
            node = it != pooled.end() ? it->second : pooled.emplace(key, nb.avg_pool(node)).first->second;
        }
        return node;
    };

    for (int layer = 0; layer < 5; ++layer) {
        const int level = std::min(layer, profile.cls_pool_stages);
        int in;
        if (layer == 0) {
            in = x;
        } else {
            std::vector<int> feats;
            for (std::size_t idx = 0; idx < outputs.size(); ++idx) feats.push_back(bring_to_level(idx, level));
            in = feats.size() == 1 ? feats[0] : g.op(OpKind::ConcatChannels, feats);
        }
        int y = nb.conv_block(in, profile.cls_channels[static_cast<std::size_t>(layer)], /*leaky=*/true,
                              /*allow_residual=*/false);
        outputs.push_back({y, level});
    }

    int gmp = g.op(OpKind::GlobalMaxPool, {outputs.back().node});
    built.logits = nb.dense(gmp, 1);
    return built;
}

namespace {

ModelSpec wrap(ModelTask task, const Profile& profile, BuiltGraph<float> built) {
    ModelSpec spec;
    spec.task = task;
    spec.profile = profile;
    spec.graph = std::move(built.graph);
    spec.logits = built.logits;
    spec.probs = built.probs;
    return spec;
}

}  // namespace

ModelSpec build_localizer(const Profile& profile, std::uint64_t init_seed) {
    return wrap(ModelTask::Localizer, profile, build_localizer_graph<float>(profile, init_seed));
}

ModelSpec build_segmenter(const Profile& profile, std::uint64_t init_seed) {
    return wrap(ModelTask::Segmenter, profile, build_segmenter_graph<float>(profile, init_seed));
}

ModelSpec build_classifier(const Profile& profile, std::uint64_t init_seed) {
    return wrap(ModelTask::Classifier, profile, build_classifier_graph<float>(profile, init_seed));
}

TensorF batch_images(const std::vector<const TensorF*>& images) {
    if (images.empty()) throw std::invalid_argument("batch_images: empty batch");
    const int h = images[0]->dim(0), w = images[0]->dim(1);
    TensorF out({static_cast<int>(images.size()), 1, h, w});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i]->shape != images[0]->shape) throw std::invalid_argument("batch_images: ragged batch");
        std::copy(images[i]->data.begin(), images[i]->data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * images[i]->data.size()));
    }
    return out;
}

TensorF batch_pairs(const std::vector<std::pair<const TensorF*, const TensorF*>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("batch_pairs: empty batch");
    const int h = pairs[0].first->dim(0), w = pairs[0].first->dim(1);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    TensorF out({static_cast<int>(pairs.size()), 2, h, w});
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].first->shape != pairs[0].first->shape || pairs[i].second->shape != pairs[0].first->shape)
            throw std::invalid_argument("batch_pairs: ragged batch");
        std::copy(pairs[i].first->data.begin(), pairs[i].first->data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * 2 * plane));
        std::copy(pairs[i].second->data.begin(), pairs[i].second->data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * 2 * plane + plane));
    }
    return out;
}

ConfidenceGrid predict_confidence(const ModelSpec& localizer, const TensorF& image) {
    if (localizer.task != ModelTask::Localizer) throw std::invalid_argument("not a localizer");
    auto tape = localizer.graph.forward({{"image", batch_images({&image})}}, Mode::Inference);
    const auto& probs = tape.vals[static_cast<std::size_t>(localizer.probs)];
    const int k = probs.shape[2];
    ConfidenceGrid grid{k, std::vector<double>(static_cast<std::size_t>(k) * k), true};
    for (std::size_t i = 0; i < grid.v.size(); ++i) grid.v[i] = static_cast<double>(probs.data[i]);
    return grid;
}

TensorF predict_soft_mask(const ModelSpec& segmenter, const TensorF& crop) {
    if (segmenter.task != ModelTask::Segmenter) throw std::invalid_argument("not a segmenter");
    auto tape = segmenter.graph.forward({{"image", batch_images({&crop})}}, Mode::Inference);
    const auto& probs = tape.vals[static_cast<std::size_t>(segmenter.probs)];
    TensorF mask({probs.shape[2], probs.shape[3]});
    std::copy(probs.data.begin(), probs.data.end(), mask.data.begin());
    return mask;
}

double predict_fraction_raw(const ModelSpec& classifier, const TensorF& crop, const TensorF& soft_mask) {
    if (classifier.task != ModelTask::Classifier) throw std::invalid_argument("not a classifier");
    auto tape = classifier.graph.forward({{"pair", batch_pairs({{&crop, &soft_mask}})}}, Mode::Inference);
    return static_cast<double>(tape.vals[static_cast<std::size_t>(classifier.logits)].data[0]);
}

template BuiltGraph<float> build_localizer_graph<float>(const Profile&, std::uint64_t);
template BuiltGraph<double> build_localizer_graph<double>(const Profile&, std::uint64_t);
template BuiltGraph<float> build_segmenter_graph<float>(const Profile&, std::uint64_t);
template BuiltGraph<double> build_segmenter_graph<double>(const Profile&, std::uint64_t);
template BuiltGraph<float> build_classifier_graph<float>(const Profile&, std::uint64_t);
template BuiltGraph<double> build_classifier_graph<double>(const Profile&, std::uint64_t);

}  // namespace stenonet
