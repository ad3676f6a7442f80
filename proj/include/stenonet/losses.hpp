#pragma once

#include "stenonet/geometry.hpp"
#include "stenonet/tensor.hpp"

namespace stenonet {

/// Weights of the morphologically-weighted cross entropy: false-positive
/// regularizer `alpha`, lesion base weight `beta`, silhouette base weight
/// `gamma`, Gaussian peak `delta` and bell width `sigma_bell` (pixels, in
/// crop coordinates).
struct MwceParams {
    double alpha = 3.0;
    double beta = 64.0;
    double gamma = 128.0;
    double delta = 10.0;
    double sigma_bell = 15.0;

    void validate() const;
};

/// Scalar loss with its gradient w.r.t. the tensor argument stated per
/// function (logits unless noted otherwise).
template <typename T>
struct LossGrad {
    double value = 0.0;
    TensorT<T> grad;
};

/// Per-pixel weight map w = alpha * o + b * m with its components, where o
/// is the current predicted probability.
template <typename T>
struct WeightMapT {
    TensorT<T> w, b, m;
};

/// Weighted sigmoid cross-entropy over a confidence grid: positive cells
/// weighted by `pos_weight` (k^2 for the localization grid). Computed in the
/// stable logit form; rejects non-finite logits.
template <typename T>
LossGrad<T> weighted_grid_bce(const TensorT<T>& logits, const LabelGrid& labels, double pos_weight);

/// Soft dice loss, -(2*sum(u*v) + eps) / (sum(u) + sum(v) + eps), in [-1, 0].
/// Gradient is w.r.t. the probabilities `pred`.
template <typename T>
LossGrad<T> dice_loss(const TensorT<T>& pred, const Mask& truth, double eps = 1e-6);

/// dice_loss composed with a sigmoid so segmenter training consumes logits.
template <typename T>
LossGrad<T> dice_loss_on_logits(const TensorT<T>& logits, const Mask& truth, double eps = 1e-6);

template <typename T>
WeightMapT<T> mwce_weight_map(const Mask& lesion, const Mask& silhouette, PixelPoint center,
                              const TensorT<T>& pred, const MwceParams& params);

/// Morphologically-weighted cross entropy summed over pixel logits. When
/// `grad_through_weights` (the default) the gradient also flows through the
/// predicted probability inside the weight map.
template <typename T>
LossGrad<T> mwce_loss(const TensorT<T>& logits, const Mask& lesion, const Mask& silhouette, PixelPoint center,
                      const MwceParams& params, bool grad_through_weights = true);

/// Mean squared error over a batch of scalar predictions; targets must lie
/// in [0, 1].
template <typename T>
LossGrad<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target);

}  // namespace stenonet
