#pragma once

#include <cstdint>
#include <vector>

#include "stenonet/tensor.hpp"

namespace stenonet {

/// The operation vocabulary of the compute graph. Decoder up-paths are
/// realized as UpsampleNearest2x followed by Conv2d; Add carries residual
/// skip connections.
enum class OpKind {
    Input,
    Param,
    Conv2d,
    AvgPool2d,
    MaxPool2d,
    GlobalMaxPool,
    BatchNorm,
    LeakyRelu,
    Relu,
    Sigmoid,
    Dense,
    ConcatChannels,
    UpsampleNearest2x,
    Add,
    Mse,
};

const char* op_kind_name(OpKind kind);

struct OpAttrs {
    int kernel_h = 3;
    int kernel_w = 3;
    int stride = 1;
    /// Symmetric zero padding. Conv blocks use "same" padding ((k-1)/2 for
    /// odd kernels); all pooling is valid (pad 0).
    int pad = 0;
    double leak = 0.1;
    double eps = 1e-5;
    double momentum = 0.9;
};

namespace ops {

// ---- conv2d: x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout] -> [N,Cout,Ho,Wo]

std::vector<int> conv2d_out_shape(const std::vector<int>& x, const std::vector<int>& w, const OpAttrs& a);

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, const OpAttrs& a);

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy, const OpAttrs& a,
                     TensorT<T>& dx, TensorT<T>& dw, TensorT<T>& db);

// ---- pooling (valid, kernel_h x kernel_w, stride)

template <typename T>
TensorT<T> avg_pool2d_forward(const TensorT<T>& x, const OpAttrs& a);
template <typename T>
void avg_pool2d_backward(const TensorT<T>& x, const TensorT<T>& dy, const OpAttrs& a, TensorT<T>& dx);

template <typename T>
TensorT<T> max_pool2d_forward(const TensorT<T>& x, const OpAttrs& a, std::vector<std::int64_t>& argmax);
template <typename T>
void max_pool2d_backward(const TensorT<T>& dy, const std::vector<std::int64_t>& argmax, TensorT<T>& dx);

template <typename T>
TensorT<T> global_max_pool_forward(const TensorT<T>& x, std::vector<std::int64_t>& argmax);
template <typename T>
void global_max_pool_backward(const TensorT<T>& dy, const std::vector<std::int64_t>& argmax, TensorT<T>& dx);

// ---- batch norm over (N,H,W) per channel; biased batch variance.
// Training normalizes with batch statistics (returned via save_*); inference
// uses the running averages.

template <typename T>
TensorT<T> batch_norm_forward(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                              const TensorT<T>& running_mean, const TensorT<T>& running_var, bool training,
                              const OpAttrs& a, TensorT<T>& save_mean, TensorT<T>& save_var);

template <typename T>
void batch_norm_backward(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& save_mean,
                         const TensorT<T>& save_var, const TensorT<T>& dy, const OpAttrs& a, bool training,
                         const TensorT<T>& running_mean, const TensorT<T>& running_var,
                         TensorT<T>& dx, TensorT<T>& dgamma, TensorT<T>& dbeta);

// ---- elementwise

template <typename T>
TensorT<T> leaky_relu_forward(const TensorT<T>& x, const OpAttrs& a);
template <typename T>
void leaky_relu_backward(const TensorT<T>& x, const TensorT<T>& dy, const OpAttrs& a, TensorT<T>& dx);

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x);
template <typename T>
void relu_backward(const TensorT<T>& x, const TensorT<T>& dy, TensorT<T>& dx);

template <typename T>
TensorT<T> sigmoid_forward(const TensorT<T>& x);
template <typename T>
void sigmoid_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>& dx);

// ---- dense: x [N,F], w [O,F], b [O] -> [N,O]

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b);
template <typename T>
void dense_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy, TensorT<T>& dx,
                    TensorT<T>& dw, TensorT<T>& db);

// ---- structure

template <typename T>
TensorT<T> concat_channels_forward(const std::vector<const TensorT<T>*>& xs);
template <typename T>
void concat_channels_backward(const std::vector<const TensorT<T>*>& xs, const TensorT<T>& dy,
                              std::vector<TensorT<T>*>& dxs);

template <typename T>
TensorT<T> upsample_nearest2x_forward(const TensorT<T>& x);
template <typename T>
void upsample_nearest2x_backward(const TensorT<T>& dy, TensorT<T>& dx);

template <typename T>
TensorT<T> add_forward(const TensorT<T>& a, const TensorT<T>& b);

// ---- mse: mean((pred - target)^2) over all elements -> scalar [1]

template <typename T>
TensorT<T> mse_forward(const TensorT<T>& pred, const TensorT<T>& target);
template <typename T>
void mse_backward(const TensorT<T>& pred, const TensorT<T>& target, const TensorT<T>& dy, TensorT<T>& dpred,
                  TensorT<T>& dtarget);

/// Numerically stable logistic function.
template <typename T>
inline T sigmoid_scalar(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    T e = std::exp(x);
    return e / (T(1) + e);
}

/// log(1 + exp(x)) without overflow.
template <typename T>
inline T softplus_scalar(T x) {
    if (x > T(0)) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace ops
}  // namespace stenonet
