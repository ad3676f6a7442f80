#include "stenonet/losses.hpp"

#include <stdexcept>

#include "stenonet/ops.hpp"

namespace stenonet {

void MwceParams::validate() const {
    if (alpha <= 0 || beta <= 0 || gamma <= 0 || delta <= 0 || sigma_bell <= 0)
        throw std::invalid_argument("mwce params must all be positive");
}

namespace {

template <typename T>
void require_finite(const TensorT<T>& logits, const char* what) {
    if (!logits.all_finite()) throw std::invalid_argument(std::string(what) + ": non-finite logits");
}

void require_same_hw(const std::vector<int>& a, const std::vector<int>& b, const char* what) {
    if (a != b)
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                                    shape_str(b));
}

}  // namespace

template <typename T>
LossGrad<T> weighted_grid_bce(const TensorT<T>& logits, const LabelGrid& labels, double pos_weight) {
    require_finite(logits, "weighted_grid_bce");
    if (logits.numel() != static_cast<std::int64_t>(labels.v.size()))
        throw std::invalid_argument("weighted_grid_bce: logits and labels disagree in size");
    LossGrad<T> out;
    out.grad = TensorT<T>(logits.shape);
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double o = static_cast<double>(logits.data[i]);
        const double y = labels.v[i] ? 1.0 : 0.0;
        const double w = labels.v[i] ? pos_weight : 1.0;
        acc += w * (ops::softplus_scalar(o) - o * y);
        out.grad.data[i] = static_cast<T>(w * (ops::sigmoid_scalar(o) - y));
    }
    out.value = acc;
    return out;
}

template <typename T>
LossGrad<T> dice_loss(const TensorT<T>& pred, const Mask& truth, double eps) {
    require_same_hw(pred.shape, truth.shape, "dice_loss");
    double inter = 0.0, sum_u = 0.0, sum_v = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double u = static_cast<double>(pred.data[i]);
        sum_u += u;
        if (truth.data[i]) {
            inter += u;
            sum_v += 1.0;
        }
    }
    const double num = 2.0 * inter + eps;
    const double den = sum_u + sum_v + eps;
    LossGrad<T> out;
    out.value = -num / den;
    out.grad = TensorT<T>(pred.shape);
    const double inv_den2 = 1.0 / (den * den);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double v = truth.data[i] ? 1.0 : 0.0;
        out.grad.data[i] = static_cast<T>(-(2.0 * v * den - num) * inv_den2);
    }
    return out;
}

template <typename T>
LossGrad<T> dice_loss_on_logits(const TensorT<T>& logits, const Mask& truth, double eps) {
    require_finite(logits, "dice_loss_on_logits");
    TensorT<T> probs = ops::sigmoid_forward(logits);
    LossGrad<T> out = dice_loss(probs, truth, eps);
    for (std::size_t i = 0; i < out.grad.data.size(); ++i) {
        const double p = static_cast<double>(probs.data[i]);
        out.grad.data[i] = static_cast<T>(static_cast<double>(out.grad.data[i]) * p * (1.0 - p));
    }
    return out;
}

template <typename T>
WeightMapT<T> mwce_weight_map(const Mask& lesion, const Mask& silhouette, PixelPoint center,
                              const TensorT<T>& pred, const MwceParams& params) {
    params.validate();
    require_same_hw(lesion.shape, silhouette.shape, "mwce_weight_map");
    require_same_hw(pred.shape, lesion.shape, "mwce_weight_map");
    if (lesion.ndim() != 2) throw std::invalid_argument("mwce_weight_map: expects 2-d masks");
    const int h = lesion.dim(0), w = lesion.dim(1);
    if (center.row < 0 || center.row >= h || center.col < 0 || center.col >= w)
        throw std::invalid_argument("mwce_weight_map: center out of bounds");
    for (std::size_t i = 0; i < lesion.data.size(); ++i)
        if (lesion.data[i] && silhouette.data[i])
            throw std::invalid_argument("mwce_weight_map: lesion and silhouette masks overlap");

    WeightMapT<T> out;
    out.w = TensorT<T>(pred.shape);
    out.b = TensorT<T>(pred.shape);
    out.m = TensorT<T>(pred.shape);
    const double inv_s2 = 1.0 / (params.sigma_bell * params.sigma_bell);
    std::size_t idx = 0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j, ++idx) {
            const double y = lesion.data[idx] ? 1.0 : 0.0;
            const double z = silhouette.data[idx] ? 1.0 : 0.0;
            const double b = params.beta * y + params.gamma * z + (1.0 - y - z);
            const double d2 = static_cast<double>(center.row - i) * (center.row - i) +
                              static_cast<double>(center.col - j) * (center.col - j);
            const double m = 1.0 + params.delta * std::exp(-d2 * inv_s2);
            out.b.data[idx] = static_cast<T>(b);
            out.m.data[idx] = static_cast<T>(m);
            out.w.data[idx] = static_cast<T>(params.alpha * static_cast<double>(pred.data[idx]) + b * m);
        }
    return out;
}

template <typename T>
LossGrad<T> mwce_loss(const TensorT<T>& logits, const Mask& lesion, const Mask& silhouette, PixelPoint center,
                      const MwceParams& params, bool grad_through_weights) {
    require_finite(logits, "mwce_loss");
    TensorT<T> probs = ops::sigmoid_forward(logits);
    WeightMapT<T> wm = mwce_weight_map(lesion, silhouette, center, probs, params);

    LossGrad<T> out;
    out.grad = TensorT<T>(logits.shape);
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double o = static_cast<double>(logits.data[i]);
        const double p = static_cast<double>(probs.data[i]);
        const double y = lesion.data[i] ? 1.0 : 0.0;
        const double w = static_cast<double>(wm.w.data[i]);
        const double ce = ops::softplus_scalar(o) - o * y;
        acc += w * ce;
        double g = w * (p - y);
        if (grad_through_weights) g += params.alpha * p * (1.0 - p) * ce;
        out.grad.data[i] = static_cast<T>(g);
    }
    out.value = acc;
    return out;
}

template <typename T>
LossGrad<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    require_same_hw(pred.shape, target.shape, "mse_loss");
    for (T t : target.data)
        if (t < T(0) || t > T(1)) throw std::invalid_argument("mse_loss: target outside [0, 1]");
    LossGrad<T> out;
    out.grad = TensorT<T>(pred.shape);
    const double n = static_cast<double>(pred.data.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
        acc += d * d;
        out.grad.data[i] = static_cast<T>(2.0 * d / n);
    }
    out.value = acc / n;
    return out;
}

#define STENONET_INSTANTIATE_LOSSES(T)                                                                      \
    template LossGrad<T> weighted_grid_bce<T>(const TensorT<T>&, const LabelGrid&, double);                 \
    template LossGrad<T> dice_loss<T>(const TensorT<T>&, const Mask&, double);                              \
    template LossGrad<T> dice_loss_on_logits<T>(const TensorT<T>&, const Mask&, double);                    \
    template WeightMapT<T> mwce_weight_map<T>(const Mask&, const Mask&, PixelPoint, const TensorT<T>&,      \
                                              const MwceParams&);                                           \
    template LossGrad<T> mwce_loss<T>(const TensorT<T>&, const Mask&, const Mask&, PixelPoint,              \
                                      const MwceParams&, bool);                                             \
    template LossGrad<T> mse_loss<T>(const TensorT<T>&, const TensorT<T>&);

STENONET_INSTANTIATE_LOSSES(float)
STENONET_INSTANTIATE_LOSSES(double)

}  // namespace stenonet
