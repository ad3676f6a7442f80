#include "stenonet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace stenonet {

const char* op_kind_name(OpKind kind) {
    switch (kind) {
        case OpKind::Input: return "input";
        case OpKind::Param: return "param";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::AvgPool2d: return "avg_pool2d";
        case OpKind::MaxPool2d: return "max_pool2d";
        case OpKind::GlobalMaxPool: return "global_max_pool";
        case OpKind::BatchNorm: return "batch_norm";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Dense: return "dense";
        case OpKind::ConcatChannels: return "concat_channels";
        case OpKind::UpsampleNearest2x: return "upsample_nearest2x";
        case OpKind::Add: return "add";
        case OpKind::Mse: return "mse";
    }
    return "?";
}

namespace ops {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<EMat<T>>;
template <typename T>
using MapCM = Eigen::Map<const EMat<T>>;

static void require(bool ok, const std::string& msg) {
    if (!ok) throw std::runtime_error(msg);
}

std::vector<int> conv2d_out_shape(const std::vector<int>& x, const std::vector<int>& w, const OpAttrs& a) {
    require(x.size() == 4 && w.size() == 4, "conv2d: expects 4-d input and weight");
    require(x[1] == w[1], "conv2d: input channels " + std::to_string(x[1]) + " != weight channels " +
                              std::to_string(w[1]));
    require(w[2] == a.kernel_h && w[3] == a.kernel_w, "conv2d: weight kernel dims disagree with attrs");
    int ho = (x[2] + 2 * a.pad - a.kernel_h) / a.stride + 1;
    int wo = (x[3] + 2 * a.pad - a.kernel_w) / a.stride + 1;
    require(ho > 0 && wo > 0, "conv2d: kernel larger than padded input");
    return {x[0], w[0], ho, wo};
}

// Gathers conv patches for one image: col[(c*kh+ki)*kw+kj, ho*Wo+wo].
template <typename T>
static void im2col(const T* x, int cin, int h, int w, const OpAttrs& a, int ho, int wo, T* col) {
    const int kh = a.kernel_h, kw = a.kernel_w, s = a.stride, p = a.pad;
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const std::int64_t out_plane = static_cast<std::int64_t>(ho) * wo;
    for (int c = 0; c < cin; ++c) {
        const T* xc = x + c * plane;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                T* row = col + ((static_cast<std::int64_t>(c) * kh + ki) * kw + kj) * out_plane;
                for (int oi = 0; oi < ho; ++oi) {
                    int ii = oi * s - p + ki;
                    T* dst = row + static_cast<std::int64_t>(oi) * wo;
                    if (ii < 0 || ii >= h) {
                        std::fill(dst, dst + wo, T(0));
                        continue;
                    }
                    const T* src = xc + static_cast<std::int64_t>(ii) * w;
                    for (int oj = 0; oj < wo; ++oj) {
                        int jj = oj * s - p + kj;
                        dst[oj] = (jj >= 0 && jj < w) ? src[jj] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-adds col gradients back into the image layout.
template <typename T>
static void col2im(const T* col, int cin, int h, int w, const OpAttrs& a, int ho, int wo, T* dx) {
    const int kh = a.kernel_h, kw = a.kernel_w, s = a.stride, p = a.pad;
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const std::int64_t out_plane = static_cast<std::int64_t>(ho) * wo;
    for (int c = 0; c < cin; ++c) {
        T* xc = dx + c * plane;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const T* row = col + ((static_cast<std::int64_t>(c) * kh + ki) * kw + kj) * out_plane;
                for (int oi = 0; oi < ho; ++oi) {
                    int ii = oi * s - p + ki;
                    if (ii < 0 || ii >= h) continue;
                    T* dst = xc + static_cast<std::int64_t>(ii) * w;
                    const T* src = row + static_cast<std::int64_t>(oi) * wo;
                    for (int oj = 0; oj < wo; ++oj) {
                        int jj = oj * s - p + kj;
                        if (jj >= 0 && jj < w) dst[jj] += src[oj];
                    }
                }
            }
        }
    }
}

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, const OpAttrs& a) {
    auto os = conv2d_out_shape(x.shape, w.shape, a);
    require(b.shape == std::vector<int>{w.shape[0]}, "conv2d: bias shape must be [out_channels]");
    const int n = os[0], cout = os[1], ho = os[2], wo = os[3];
    const int cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const std::int64_t k = static_cast<std::int64_t>(cin) * a.kernel_h * a.kernel_w;
    const std::int64_t hw = static_cast<std::int64_t>(ho) * wo;

    TensorT<T> y(os);
    std::vector<T> col(static_cast<std::size_t>(k * hw));
    MapCM<T> wm(w.data.data(), cout, k);
    for (int i = 0; i < n; ++i) {
        im2col(x.data.data() + static_cast<std::int64_t>(i) * cin * h * wd, cin, h, wd, a, ho, wo, col.data());
        MapCM<T> cm(col.data(), k, hw);
        MapM<T> ym(y.data.data() + static_cast<std::int64_t>(i) * cout * hw, cout, hw);
        ym.noalias() = wm * cm;
        for (int c = 0; c < cout; ++c) ym.row(c).array() += b.data[static_cast<std::size_t>(c)];
    }
    return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy, const OpAttrs& a,
                     TensorT<T>& dx, TensorT<T>& dw, TensorT<T>& db) {
    auto os = conv2d_out_shape(x.shape, w.shape, a);
    require(dy.shape == os, "conv2d backward: upstream shape mismatch");
    const int n = os[0], cout = os[1], ho = os[2], wo = os[3];
    const int cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const std::int64_t k = static_cast<std::int64_t>(cin) * a.kernel_h * a.kernel_w;
    const std::int64_t hw = static_cast<std::int64_t>(ho) * wo;

    dx = TensorT<T>(x.shape);
    dw = TensorT<T>(w.shape);
    db = TensorT<T>({w.shape[0]});

    std::vector<T> col(static_cast<std::size_t>(k * hw));
    std::vector<T> dcol(static_cast<std::size_t>(k * hw));
    MapCM<T> wm(w.data.data(), cout, k);
    MapM<T> dwm(dw.data.data(), cout, k);
    for (int i = 0; i < n; ++i) {
        im2col(x.data.data() + static_cast<std::int64_t>(i) * cin * h * wd, cin, h, wd, a, ho, wo, col.data());
        MapCM<T> cm(col.data(), k, hw);
        MapCM<T> dym(dy.data.data() + static_cast<std::int64_t>(i) * cout * hw, cout, hw);
        dwm.noalias() += dym * cm.transpose();
        for (int c = 0; c < cout; ++c) db.data[static_cast<std::size_t>(c)] += dym.row(c).sum();
        MapM<T> dcm(dcol.data(), k, hw);
        dcm.noalias() = wm.transpose() * dym;
        col2im(dcol.data(), cin, h, wd, a, ho, wo,
               dx.data.data() + static_cast<std::int64_t>(i) * cin * h * wd);
    }
}

template <typename T>
static std::vector<int> pool_out_shape(const TensorT<T>& x, const OpAttrs& a, const char* what) {
    require(x.shape.size() == 4, std::string(what) + ": expects 4-d input");
    require(a.stride >= 1, std::string(what) + ": stride must be >= 1");
    int ho = (x.shape[2] - a.kernel_h) / a.stride + 1;
    int wo = (x.shape[3] - a.kernel_w) / a.stride + 1;
    require(ho > 0 && wo > 0, std::string(what) + ": window larger than input");
    return {x.shape[0], x.shape[1], ho, wo};
}

template <typename T>
TensorT<T> avg_pool2d_forward(const TensorT<T>& x, const OpAttrs& a) {
    auto os = pool_out_shape(x, a, "avg_pool2d");
    TensorT<T> y(os);
    const T inv = T(1) / static_cast<T>(a.kernel_h * a.kernel_w);
    for (int n = 0; n < os[0]; ++n)
        for (int c = 0; c < os[1]; ++c)
            for (int oi = 0; oi < os[2]; ++oi)
                for (int oj = 0; oj < os[3]; ++oj) {
                    T acc = 0;
                    for (int ki = 0; ki < a.kernel_h; ++ki)
                        for (int kj = 0; kj < a.kernel_w; ++kj)
                            acc += x.at(n, c, oi * a.stride + ki, oj * a.stride + kj);
                    y.at(n, c, oi, oj) = acc * inv;
                }
    return y;
}

template <typename T>
void avg_pool2d_backward(const TensorT<T>& x, const TensorT<T>& dy, const OpAttrs& a, TensorT<T>& dx) {
    dx = TensorT<T>(x.shape);
    const T inv = T(1) / static_cast<T>(a.kernel_h * a.kernel_w);
    for (int n = 0; n < dy.shape[0]; ++n)
        for (int c = 0; c < dy.shape[1]; ++c)
            for (int oi = 0; oi < dy.shape[2]; ++oi)
                for (int oj = 0; oj < dy.shape[3]; ++oj) {
                    T g = dy.at(n, c, oi, oj) * inv;
                    for (int ki = 0; ki < a.kernel_h; ++ki)
                        for (int kj = 0; kj < a.kernel_w; ++kj)
                            dx.at(n, c, oi * a.stride + ki, oj * a.stride + kj) += g;
                }
}

template <typename T>
TensorT<T> max_pool2d_forward(const TensorT<T>& x, const OpAttrs& a, std::vector<std::int64_t>& argmax) {
    auto os = pool_out_shape(x, a, "max_pool2d");
    TensorT<T> y(os);
    argmax.assign(static_cast<std::size_t>(shape_numel(os)), 0);
    std::size_t o = 0;
    for (int n = 0; n < os[0]; ++n)
        for (int c = 0; c < os[1]; ++c)
            for (int oi = 0; oi < os[2]; ++oi)
                for (int oj = 0; oj < os[3]; ++oj, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::int64_t best_idx = 0;
                    for (int ki = 0; ki < a.kernel_h; ++ki)
                        for (int kj = 0; kj < a.kernel_w; ++kj) {
                            int ii = oi * a.stride + ki, jj = oj * a.stride + kj;
                            T v = x.at(n, c, ii, jj);
                            if (v > best) {  // first max wins on ties
                                best = v;
                                best_idx = ((static_cast<std::int64_t>(n) * os[1] + c) * x.shape[2] + ii) *
                                               x.shape[3] + jj;
                            }
                        }
                    y.data[o] = best;
                    argmax[o] = best_idx;
                }
    return y;
}

template <typename T>
void max_pool2d_backward(const TensorT<T>& dy, const std::vector<std::int64_t>& argmax, TensorT<T>& dx) {
    for (std::size_t o = 0; o < dy.data.size(); ++o)
        dx.data[static_cast<std::size_t>(argmax[o])] += dy.data[o];
}

template <typename T>
TensorT<T> global_max_pool_forward(const TensorT<T>& x, std::vector<std::int64_t>& argmax) {
    require(x.shape.size() == 4, "global_max_pool: expects 4-d input");
    TensorT<T> y({x.shape[0], x.shape[1]});
    argmax.assign(static_cast<std::size_t>(y.numel()), 0);
    const std::int64_t plane = static_cast<std::int64_t>(x.shape[2]) * x.shape[3];
    std::size_t o = 0;
    for (int n = 0; n < x.shape[0]; ++n)
        for (int c = 0; c < x.shape[1]; ++c, ++o) {
            const T* p = x.data.data() + (static_cast<std::int64_t>(n) * x.shape[1] + c) * plane;
            std::int64_t best = 0;
            for (std::int64_t i = 1; i < plane; ++i)
                if (p[i] > p[best]) best = i;
            y.data[o] = p[best];
            argmax[o] = (static_cast<std::int64_t>(n) * x.shape[1] + c) * plane + best;
        }
    return y;
}

template <typename T>
void global_max_pool_backward(const TensorT<T>& dy, const std::vector<std::int64_t>& argmax, TensorT<T>& dx) {
    for (std::size_t o = 0; o < dy.data.size(); ++o)
        dx.data[static_cast<std::size_t>(argmax[o])] += dy.data[o];
}

template <typename T>
TensorT<T> batch_norm_forward(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                              const TensorT<T>& running_mean, const TensorT<T>& running_var, bool training,
                              const OpAttrs& a, TensorT<T>& save_mean, TensorT<T>& save_var) {
    require(x.shape.size() == 4, "batch_norm: expects 4-d input");
    const int c = x.shape[1];
    require(gamma.shape == std::vector<int>{c} && beta.shape == std::vector<int>{c},
            "batch_norm: gamma/beta must be [channels]");
    const std::int64_t plane = static_cast<std::int64_t>(x.shape[2]) * x.shape[3];
    const std::int64_t m = static_cast<std::int64_t>(x.shape[0]) * plane;

    TensorT<T> y(x.shape);
    save_mean = TensorT<T>({c});
    save_var = TensorT<T>({c});
    for (int ch = 0; ch < c; ++ch) {
        T mean, var;
        if (training) {
            T acc = 0;
            for (int n = 0; n < x.shape[0]; ++n) {
                const T* p = x.data.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
            }
            mean = acc / static_cast<T>(m);
            T acc2 = 0;
            for (int n = 0; n < x.shape[0]; ++n) {
                const T* p = x.data.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    T d = p[i] - mean;
                    acc2 += d * d;
                }
            }
            var = acc2 / static_cast<T>(m);
        } else {
            mean = running_mean.data[static_cast<std::size_t>(ch)];
            var = running_var.data[static_cast<std::size_t>(ch)];
        }
        save_mean.data[static_cast<std::size_t>(ch)] = mean;
        save_var.data[static_cast<std::size_t>(ch)] = var;
        const T inv = T(1) / std::sqrt(var + static_cast<T>(a.eps));
        const T g = gamma.data[static_cast<std::size_t>(ch)], bb = beta.data[static_cast<std::size_t>(ch)];
        for (int n = 0; n < x.shape[0]; ++n) {
            const T* p = x.data.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
            T* q = y.data.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) q[i] = (p[i] - mean) * inv * g + bb;
        }
    }
    return y;
}

template <typename T>
void batch_norm_backward(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& save_mean,
                         const TensorT<T>& save_var, const TensorT<T>& dy, const OpAttrs& a, bool training,
                         const TensorT<T>& running_mean, const TensorT<T>& running_var,
                         TensorT<T>& dx, TensorT<T>& dgamma, TensorT<T>& dbeta) {
    const int c = x.shape[1];
    const std::int64_t plane = static_cast<std::int64_t>(x.shape[2]) * x.shape[3];
    const std::int64_t m = static_cast<std::int64_t>(x.shape[0]) * plane;
    dx = TensorT<T>(x.shape);
    dgamma = TensorT<T>({c});
    dbeta = TensorT<T>({c});
    for (int ch = 0; ch < c; ++ch) {
        const T mean = training ? save_mean.data[ch] : running_mean.data[ch];
        const T var = training ? save_var.data[ch] : running_var.data[ch];
        const T inv = T(1) / std::sqrt(var + static_cast<T>(a.eps));
        const T g = gamma.data[ch];

        T sum_dy = 0, sum_dy_xhat = 0;
        for (int n = 0; n < x.shape[0]; ++n) {
            const T* xp = x.data.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
            const T* dp = dy.data.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                sum_dy += dp[i];
                sum_dy_xhat += dp[i] * (xp[i] - mean) * inv;
            }
        }
        dgamma.data[ch] = sum_dy_xhat;
        dbeta.data[ch] = sum_dy;

        for (int n = 0; n < x.shape[0]; ++n) {
            const T* xp = x.data.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
            const T* dp = dy.data.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
            T* dq = dx.data.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
            if (training) {
                for (std::int64_t i = 0; i < plane; ++i) {
                    T xhat = (xp[i] - mean) * inv;
                    dq[i] = g * inv *
                            (dp[i] - sum_dy / static_cast<T>(m) - xhat * sum_dy_xhat / static_cast<T>(m));
                }
            } else {
                for (std::int64_t i = 0; i < plane; ++i) dq[i] = g * inv * dp[i];
            }
        }
    }
}

template <typename T>
TensorT<T> leaky_relu_forward(const TensorT<T>& x, const OpAttrs& a) {
    TensorT<T> y = x;
    const T k = static_cast<T>(a.leak);
    for (T& v : y.data) v = v > T(0) ? v : k * v;
    return y;
}

template <typename T>
void leaky_relu_backward(const TensorT<T>& x, const TensorT<T>& dy, const OpAttrs& a, TensorT<T>& dx) {
    dx = TensorT<T>(x.shape);
    const T k = static_cast<T>(a.leak);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        dx.data[i] = x.data[i] > T(0) ? dy.data[i] : k * dy.data[i];
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
    TensorT<T> y = x;
    for (T& v : y.data) v = std::max(v, T(0));
    return y;
}

template <typename T>
void relu_backward(const TensorT<T>& x, const TensorT<T>& dy, TensorT<T>& dx) {
    dx = TensorT<T>(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) dx.data[i] = x.data[i] > T(0) ? dy.data[i] : T(0);
}

template <typename T>
TensorT<T> sigmoid_forward(const TensorT<T>& x) {
    TensorT<T> y = x;
    for (T& v : y.data) v = sigmoid_scalar(v);
    return y;
}

template <typename T>
void sigmoid_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>& dx) {
    dx = TensorT<T>(y.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) dx.data[i] = dy.data[i] * y.data[i] * (T(1) - y.data[i]);
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    require(x.shape.size() == 2 && w.shape.size() == 2, "dense: expects 2-d input and weight");
    require(x.shape[1] == w.shape[1], "dense: feature dim mismatch");
    require(b.shape == std::vector<int>{w.shape[0]}, "dense: bias shape must be [out]");
    TensorT<T> y({x.shape[0], w.shape[0]});
    MapCM<T> xm(x.data.data(), x.shape[0], x.shape[1]);
    MapCM<T> wm(w.data.data(), w.shape[0], w.shape[1]);
    MapM<T> ym(y.data.data(), y.shape[0], y.shape[1]);
    ym.noalias() = xm * wm.transpose();
    for (int o = 0; o < y.shape[1]; ++o) ym.col(o).array() += b.data[static_cast<std::size_t>(o)];
    return y;
}

template <typename T>
void dense_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy, TensorT<T>& dx,
                    TensorT<T>& dw, TensorT<T>& db) {
    dx = TensorT<T>(x.shape);
    dw = TensorT<T>(w.shape);
    db = TensorT<T>({w.shape[0]});
    MapCM<T> xm(x.data.data(), x.shape[0], x.shape[1]);
    MapCM<T> wm(w.data.data(), w.shape[0], w.shape[1]);
    MapCM<T> dym(dy.data.data(), dy.shape[0], dy.shape[1]);
    MapM<T> dxm(dx.data.data(), dx.shape[0], dx.shape[1]);
    MapM<T> dwm(dw.data.data(), dw.shape[0], dw.shape[1]);
    dxm.noalias() = dym * wm;
    dwm.noalias() = dym.transpose() * xm;
    for (int o = 0; o < w.shape[0]; ++o) db.data[static_cast<std::size_t>(o)] = dym.col(o).sum();
}

template <typename T>
TensorT<T> concat_channels_forward(const std::vector<const TensorT<T>*>& xs) {
    require(!xs.empty(), "concat_channels: needs at least one input");
    const auto& s0 = xs[0]->shape;
    require(s0.size() == 4, "concat_channels: expects 4-d inputs");
    int ctotal = 0;
    for (const auto* x : xs) {
        require(x->shape.size() == 4 && x->shape[0] == s0[0] && x->shape[2] == s0[2] && x->shape[3] == s0[3],
                "concat_channels: inputs must agree on batch and spatial dims");
        ctotal += x->shape[1];
    }
    TensorT<T> y({s0[0], ctotal, s0[2], s0[3]});
    const std::int64_t plane = static_cast<std::int64_t>(s0[2]) * s0[3];
    for (int n = 0; n < s0[0]; ++n) {
        std::int64_t coff = 0;
        for (const auto* x : xs) {
            const std::int64_t block = static_cast<std::int64_t>(x->shape[1]) * plane;
            std::copy_n(x->data.data() + static_cast<std::int64_t>(n) * block, block,
                        y.data.data() + (static_cast<std::int64_t>(n) * ctotal + coff) * plane);
            coff += x->shape[1];
        }
    }
    return y;
}

template <typename T>
void concat_channels_backward(const std::vector<const TensorT<T>*>& xs, const TensorT<T>& dy,
                              std::vector<TensorT<T>*>& dxs) {
    const auto& s0 = xs[0]->shape;
    const std::int64_t plane = static_cast<std::int64_t>(s0[2]) * s0[3];
    const int ctotal = dy.shape[1];
    for (int n = 0; n < s0[0]; ++n) {
        std::int64_t coff = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const std::int64_t block = static_cast<std::int64_t>(xs[i]->shape[1]) * plane;
            const T* src = dy.data.data() + (static_cast<std::int64_t>(n) * ctotal + coff) * plane;
            T* dst = dxs[i]->data.data() + static_cast<std::int64_t>(n) * block;
            for (std::int64_t j = 0; j < block; ++j) dst[j] += src[j];
            coff += xs[i]->shape[1];
        }
    }
}

template <typename T>
TensorT<T> upsample_nearest2x_forward(const TensorT<T>& x) {
    require(x.shape.size() == 4, "upsample_nearest2x: expects 4-d input");
    TensorT<T> y({x.shape[0], x.shape[1], x.shape[2] * 2, x.shape[3] * 2});
    for (int n = 0; n < x.shape[0]; ++n)
        for (int c = 0; c < x.shape[1]; ++c)
            for (int i = 0; i < x.shape[2]; ++i)
                for (int j = 0; j < x.shape[3]; ++j) {
                    T v = x.at(n, c, i, j);
                    y.at(n, c, 2 * i, 2 * j) = v;
                    y.at(n, c, 2 * i, 2 * j + 1) = v;
                    y.at(n, c, 2 * i + 1, 2 * j) = v;
                    y.at(n, c, 2 * i + 1, 2 * j + 1) = v;
                }
    return y;
}

template <typename T>
void upsample_nearest2x_backward(const TensorT<T>& dy, TensorT<T>& dx) {
    for (int n = 0; n < dx.shape[0]; ++n)
        for (int c = 0; c < dx.shape[1]; ++c)
            for (int i = 0; i < dx.shape[2]; ++i)
                for (int j = 0; j < dx.shape[3]; ++j)
                    dx.at(n, c, i, j) += dy.at(n, c, 2 * i, 2 * j) + dy.at(n, c, 2 * i, 2 * j + 1) +
                                         dy.at(n, c, 2 * i + 1, 2 * j) + dy.at(n, c, 2 * i + 1, 2 * j + 1);
}

template <typename T>
TensorT<T> add_forward(const TensorT<T>& a, const TensorT<T>& b) {
    require(a.shape == b.shape, "add: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    TensorT<T> y = a;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
    return y;
}

template <typename T>
TensorT<T> mse_forward(const TensorT<T>& pred, const TensorT<T>& target) {
    require(pred.shape == target.shape, "mse: shape mismatch");
    T acc = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        T d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    TensorT<T> y({1});
    y.data[0] = acc / static_cast<T>(pred.data.size());
    return y;
}

template <typename T>
void mse_backward(const TensorT<T>& pred, const TensorT<T>& target, const TensorT<T>& dy, TensorT<T>& dpred,
                  TensorT<T>& dtarget) {
    dpred = TensorT<T>(pred.shape);
    dtarget = TensorT<T>(target.shape);
    const T scale = T(2) * dy.data[0] / static_cast<T>(pred.data.size());
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        T g = scale * (pred.data[i] - target.data[i]);
        dpred.data[i] = g;
        dtarget.data[i] = -g;
    }
}

#define STENONET_INSTANTIATE_OPS(T)                                                                          \
    template TensorT<T> conv2d_forward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,          \
                                          const OpAttrs&);                                                   \
    template void conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,               \
                                     const OpAttrs&, TensorT<T>&, TensorT<T>&, TensorT<T>&);                 \
    template TensorT<T> avg_pool2d_forward<T>(const TensorT<T>&, const OpAttrs&);                            \
    template void avg_pool2d_backward<T>(const TensorT<T>&, const TensorT<T>&, const OpAttrs&, TensorT<T>&); \
    template TensorT<T> max_pool2d_forward<T>(const TensorT<T>&, const OpAttrs&,                             \
                                              std::vector<std::int64_t>&);                                   \
    template void max_pool2d_backward<T>(const TensorT<T>&, const std::vector<std::int64_t>&, TensorT<T>&);  \
    template TensorT<T> global_max_pool_forward<T>(const TensorT<T>&, std::vector<std::int64_t>&);           \
    template void global_max_pool_backward<T>(const TensorT<T>&, const std::vector<std::int64_t>&,           \
                                              TensorT<T>&);                                                  \
    template TensorT<T> batch_norm_forward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,       \
                                              const TensorT<T>&, const TensorT<T>&, bool, const OpAttrs&,    \
                                              TensorT<T>&, TensorT<T>&);                                     \
    template void batch_norm_backward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,            \
                                         const TensorT<T>&, const TensorT<T>&, const OpAttrs&, bool,         \
                                         const TensorT<T>&, const TensorT<T>&, TensorT<T>&, TensorT<T>&,     \
                                         TensorT<T>&);                                                       \
    template TensorT<T> leaky_relu_forward<T>(const TensorT<T>&, const OpAttrs&);                            \
    template void leaky_relu_backward<T>(const TensorT<T>&, const TensorT<T>&, const OpAttrs&, TensorT<T>&); \
    template TensorT<T> relu_forward<T>(const TensorT<T>&);                                                  \
    template void relu_backward<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);                       \
    template TensorT<T> sigmoid_forward<T>(const TensorT<T>&);                                               \
    template void sigmoid_backward<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);                    \
    template TensorT<T> dense_forward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);           \
    template void dense_backward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, TensorT<T>&,    \
                                    TensorT<T>&, TensorT<T>&);                                               \
    template TensorT<T> concat_channels_forward<T>(const std::vector<const TensorT<T>*>&);                   \
    template void concat_channels_backward<T>(const std::vector<const TensorT<T>*>&, const TensorT<T>&,      \
                                              std::vector<TensorT<T>*>&);                                    \
    template TensorT<T> upsample_nearest2x_forward<T>(const TensorT<T>&);                                    \
    template void upsample_nearest2x_backward<T>(const TensorT<T>&, TensorT<T>&);                            \
    template TensorT<T> add_forward<T>(const TensorT<T>&, const TensorT<T>&);                                \
    template TensorT<T> mse_forward<T>(const TensorT<T>&, const TensorT<T>&);                                \
    template void mse_backward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, TensorT<T>&,      \
                                  TensorT<T>&);

STENONET_INSTANTIATE_OPS(float)
STENONET_INSTANTIATE_OPS(double)

}  // namespace ops
}  // namespace stenonet
