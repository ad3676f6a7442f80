#pragma once

#include <map>

#include "stenonet/graph.hpp"

namespace stenonet {

/// Adaptive moment estimation; the base optimizer under the plateau
/// schedule. Default step size 1e-3.
struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    double learning_rate() const { return cfg_.learning_rate; }
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

    /// Applies one update to every non-frozen parameter with a gradient.
    /// Frozen parameters stay bit-identical. If any relevant gradient is
    /// non-finite the whole step is skipped and false is returned.
    bool step(GraphT<T>& graph, const Grads<T>& grads);

private:
    AdamConfig cfg_;
    std::map<int, std::pair<TensorT<T>, TensorT<T>>> moments_;
    std::int64_t t_ = 0;
};

using AdamF = Adam<float>;

}  // namespace stenonet
