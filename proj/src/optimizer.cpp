#include "stenonet/optimizer.hpp"

#include <cmath>

namespace stenonet {

template <typename T>
bool Adam<T>::step(GraphT<T>& graph, const Grads<T>& grads) {
    std::vector<int> live;
    for (int pid : graph.param_ids()) {
        if (graph.is_frozen(pid) || !grads.has(pid)) continue;
        if (!grads.g[static_cast<std::size_t>(pid)].all_finite()) return false;
        live.push_back(pid);
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (int pid : live) {
        TensorT<T>& value = graph.param_value(pid);
        const TensorT<T>& g = grads.g[static_cast<std::size_t>(pid)];
        auto it = moments_.find(pid);
        if (it == moments_.end())
            it = moments_.emplace(pid, std::make_pair(TensorT<T>(value.shape), TensorT<T>(value.shape))).first;
        auto& [m, v] = it->second;
        for (std::size_t i = 0; i < value.data.size(); ++i) {
            const double gi = static_cast<double>(g.data[i]);
            const double mi = cfg_.beta1 * static_cast<double>(m.data[i]) + (1.0 - cfg_.beta1) * gi;
            const double vi = cfg_.beta2 * static_cast<double>(v.data[i]) + (1.0 - cfg_.beta2) * gi * gi;
            m.data[i] = static_cast<T>(mi);
            v.data[i] = static_cast<T>(vi);
            value.data[i] -= static_cast<T>(cfg_.learning_rate * (mi / bc1) /
                                            (std::sqrt(vi / bc2) + cfg_.eps));
        }
    }
    return true;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace stenonet
