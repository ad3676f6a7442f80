#include "stenonet/graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace stenonet {

namespace {

[[noreturn]] void fail_node(int id, const std::string& name, const std::string& what) {
    throw std::runtime_error("node #" + std::to_string(id) + (name.empty() ? "" : " '" + name + "'") + ": " +
                             what);
}

int resolve_batch(int declared, int actual, int id, const std::string& name) {
    if (declared == -1) return actual;
    if (declared != actual) fail_node(id, name, "batch dim mismatch");
    return declared;
}

}  // namespace

template <typename T>
int GraphT<T>::input(const std::string& name, std::vector<int> shape) {
    if (name.empty() || by_name_.count(name)) throw std::invalid_argument("input needs a unique name: " + name);
    Node n;
    n.kind = OpKind::Input;
    n.name = name;
    n.shape = std::move(shape);
    nodes_.push_back(std::move(n));
    values_.emplace_back();
    bn_mean_.emplace_back();
    bn_var_.emplace_back();
    int id = num_nodes() - 1;
    by_name_[name] = id;
    return id;
}

template <typename T>
int GraphT<T>::param(const std::string& name, const std::string& group, TensorT<T> init) {
    if (name.empty() || by_name_.count(name)) throw std::invalid_argument("param needs a unique name: " + name);
    Node n;
    n.kind = OpKind::Param;
    n.name = name;
    n.group = group;
    n.shape = init.shape;
    nodes_.push_back(std::move(n));
    values_.push_back(std::move(init));
    bn_mean_.emplace_back();
    bn_var_.emplace_back();
    frozen_groups_.emplace(group, false);
    int id = num_nodes() - 1;
    by_name_[name] = id;
    return id;
}

template <typename T>
std::vector<int> GraphT<T>::infer_shape(const Node& n) const {
    auto in = [&](std::size_t i) -> const std::vector<int>& {
        return nodes_[static_cast<std::size_t>(n.inputs[i])].shape;
    };
    switch (n.kind) {
        case OpKind::Conv2d: {
            auto x = in(0);
            int nb = x[0];
            x[0] = 1;  // placeholder so conv arithmetic works with symbolic batch
            auto s = ops::conv2d_out_shape(x, in(1), n.attrs);
            s[0] = nb;
            return s;
        }
        case OpKind::AvgPool2d:
        case OpKind::MaxPool2d: {
            auto x = in(0);
            if (x.size() != 4) throw std::runtime_error("pool expects 4-d input");
            int ho = (x[2] - n.attrs.kernel_h) / n.attrs.stride + 1;
            int wo = (x[3] - n.attrs.kernel_w) / n.attrs.stride + 1;
            if (ho <= 0 || wo <= 0) throw std::runtime_error("pool window larger than input");
            return {x[0], x[1], ho, wo};
        }
        case OpKind::GlobalMaxPool: {
            auto x = in(0);
            return {x[0], x[1]};
        }
        case OpKind::BatchNorm:
        case OpKind::LeakyRelu:
        case OpKind::Relu:
        case OpKind::Sigmoid:
            return in(0);
        case OpKind::Dense: {
            auto x = in(0);
            auto w = in(1);
            if (x[1] != w[1]) throw std::runtime_error("dense feature dim mismatch");
            return {x[0], w[0]};
        }
        case OpKind::ConcatChannels: {
            auto s = in(0);
            for (std::size_t i = 1; i < n.inputs.size(); ++i) {
                auto o = in(i);
                if (o[2] != s[2] || o[3] != s[3]) throw std::runtime_error("concat spatial dims disagree");
                s[1] += o[1];
            }
            return s;
        }
        case OpKind::UpsampleNearest2x: {
            auto x = in(0);
            return {x[0], x[1], x[2] * 2, x[3] * 2};
        }
        case OpKind::Add: {
            if (in(0) != in(1)) throw std::runtime_error("add shape mismatch");
            return in(0);
        }
        case OpKind::Mse:
            return {1};
        default:
            throw std::runtime_error("op kind has no shape rule");
    }
}

template <typename T>
int GraphT<T>::op(OpKind kind, std::vector<int> inputs, OpAttrs attrs, const std::string& name) {
    Node n;
    n.kind = kind;
    n.attrs = attrs;
    n.inputs = std::move(inputs);
    n.name = name;
    for (int i : n.inputs)
        if (i < 0 || i >= num_nodes())
            throw std::invalid_argument("op input id out of range (graph is append-only)");
    int id = num_nodes();
    try {
        n.shape = infer_shape(n);
    } catch (const std::exception& e) {
        fail_node(id, name.empty() ? std::string(op_kind_name(kind)) : name, e.what());
    }
    if (kind == OpKind::BatchNorm) {
        if (name.empty() || by_name_.count(name)) throw std::invalid_argument("batch_norm needs a unique name");
        int c = n.shape[1];
        nodes_.push_back(std::move(n));
        values_.emplace_back();
        bn_mean_.push_back(TensorT<T>({c}, T(0)));
        bn_var_.push_back(TensorT<T>({c}, T(1)));
        by_name_[name] = id;
        return id;
    }
    nodes_.push_back(std::move(n));
    values_.emplace_back();
    bn_mean_.emplace_back();
    bn_var_.emplace_back();
    if (!name.empty()) {
        if (by_name_.count(name)) throw std::invalid_argument("duplicate node name: " + name);
        by_name_[name] = id;
    }
    return id;
}

template <typename T>
TensorT<T>& GraphT<T>::param_value(int id) {
    if (node(id).kind != OpKind::Param) throw std::invalid_argument("not a param node");
    return values_[static_cast<std::size_t>(id)];
}

template <typename T>
const TensorT<T>& GraphT<T>::param_value(int id) const {
    if (node(id).kind != OpKind::Param) throw std::invalid_argument("not a param node");
    return values_[static_cast<std::size_t>(id)];
}

template <typename T>
std::vector<int> GraphT<T>::param_ids() const {
    std::vector<int> out;
    for (int i = 0; i < num_nodes(); ++i)
        if (nodes_[static_cast<std::size_t>(i)].kind == OpKind::Param) out.push_back(i);
    return out;
}

template <typename T>
int GraphT<T>::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
}

template <typename T>
void GraphT<T>::set_group_frozen(const std::string& group, bool frozen) {
    auto it = frozen_groups_.find(group);
    if (it == frozen_groups_.end()) throw std::invalid_argument("unknown param group: " + group);
    it->second = frozen;
}

template <typename T>
void GraphT<T>::set_all_frozen(bool frozen) {
    for (auto& [g, f] : frozen_groups_) f = frozen;
}

template <typename T>
bool GraphT<T>::is_frozen(int param_id) const {
    return frozen_groups_.at(node(param_id).group);
}

template <typename T>
std::map<OpKind, int> GraphT<T>::census() const {
    std::map<OpKind, int> c;
    for (const auto& n : nodes_) c[n.kind]++;
    return c;
}

template <typename T>
const TensorT<T>& GraphT<T>::value_of(int id, const Tape<T>& tape) const {
    if (node(id).kind == OpKind::Param) return values_[static_cast<std::size_t>(id)];
    return tape.vals[static_cast<std::size_t>(id)];
}

template <typename T>
Tape<T> GraphT<T>::forward(const std::map<std::string, TensorT<T>>& feeds, Mode mode) const {
    Tape<T> tape;
    tape.mode = mode;
    tape.vals.resize(static_cast<std::size_t>(num_nodes()));
    tape.aux.resize(static_cast<std::size_t>(num_nodes()));
    tape.bn_save_mean.resize(static_cast<std::size_t>(num_nodes()));
    tape.bn_save_var.resize(static_cast<std::size_t>(num_nodes()));

    for (int id = 0; id < num_nodes(); ++id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        auto& out = tape.vals[static_cast<std::size_t>(id)];
        auto val = [&](std::size_t i) -> const TensorT<T>& { return value_of(n.inputs[i], tape); };
        try {
            switch (n.kind) {
                case OpKind::Input: {
                    auto it = feeds.find(n.name);
                    if (it == feeds.end()) throw std::runtime_error("missing feed");
                    const auto& fed = it->second;
                    if (fed.shape.size() != n.shape.size()) throw std::runtime_error("feed rank mismatch");
                    for (std::size_t d = 1; d < n.shape.size(); ++d)
                        if (fed.shape[d] != n.shape[d])
                            throw std::runtime_error("feed shape " + shape_str(fed.shape) +
                                                     " does not match declared " + shape_str(n.shape));
                    if (n.shape[0] != -1 && fed.shape[0] != n.shape[0])
                        throw std::runtime_error("feed batch mismatch");
                    out = fed;
                    break;
                }
                case OpKind::Param:
                    break;  // read directly from values_
                case OpKind::Conv2d:
                    out = ops::conv2d_forward(val(0), val(1), val(2), n.attrs);
                    break;
                case OpKind::AvgPool2d:
                    out = ops::avg_pool2d_forward(val(0), n.attrs);
                    break;
                case OpKind::MaxPool2d:
                    out = ops::max_pool2d_forward(val(0), n.attrs, tape.aux[static_cast<std::size_t>(id)]);
                    break;
                case OpKind::GlobalMaxPool:
                    out = ops::global_max_pool_forward(val(0), tape.aux[static_cast<std::size_t>(id)]);
                    break;
                case OpKind::BatchNorm:
                    out = ops::batch_norm_forward(val(0), val(1), val(2),
                                                  bn_mean_[static_cast<std::size_t>(id)],
                                                  bn_var_[static_cast<std::size_t>(id)],
                                                  mode == Mode::Training, n.attrs,
                                                  tape.bn_save_mean[static_cast<std::size_t>(id)],
                                                  tape.bn_save_var[static_cast<std::size_t>(id)]);
                    break;
                case OpKind::LeakyRelu:
                    out = ops::leaky_relu_forward(val(0), n.attrs);
                    break;
                case OpKind::Relu:
                    out = ops::relu_forward(val(0));
                    break;
                case OpKind::Sigmoid:
                    out = ops::sigmoid_forward(val(0));
                    break;
                case OpKind::Dense:
                    out = ops::dense_forward(val(0), val(1), val(2));
                    break;
                case OpKind::ConcatChannels: {
                    std::vector<const TensorT<T>*> xs;
                    for (std::size_t i = 0; i < n.inputs.size(); ++i) xs.push_back(&val(i));
                    out = ops::concat_channels_forward(xs);
                    break;
                }
                case OpKind::UpsampleNearest2x:
                    out = ops::upsample_nearest2x_forward(val(0));
                    break;
                case OpKind::Add:
                    out = ops::add_forward(val(0), val(1));
                    break;
                case OpKind::Mse:
                    out = ops::mse_forward(val(0), val(1));
                    break;
            }
        } catch (const std::exception& e) {
            fail_node(id, n.name.empty() ? std::string(op_kind_name(n.kind)) : n.name, e.what());
        }
    }
    return tape;
}

template <typename T>
void GraphT<T>::commit_bn_updates(const Tape<T>& tape) {
    if (tape.mode != Mode::Training) return;
    for (int id = 0; id < num_nodes(); ++id) {
        if (nodes_[static_cast<std::size_t>(id)].kind != OpKind::BatchNorm) continue;
        const T mom = static_cast<T>(nodes_[static_cast<std::size_t>(id)].attrs.momentum);
        auto& rm = bn_mean_[static_cast<std::size_t>(id)];
        auto& rv = bn_var_[static_cast<std::size_t>(id)];
        const auto& bm = tape.bn_save_mean[static_cast<std::size_t>(id)];
        const auto& bv = tape.bn_save_var[static_cast<std::size_t>(id)];
        for (std::size_t i = 0; i < rm.data.size(); ++i) {
            rm.data[i] = mom * rm.data[i] + (T(1) - mom) * bm.data[i];
            rv.data[i] = mom * rv.data[i] + (T(1) - mom) * bv.data[i];
        }
    }
}

template <typename T>
Grads<T> GraphT<T>::backward(const Tape<T>& tape, int wrt, const TensorT<T>& upstream) const {
    Grads<T> grads;
    grads.g.resize(static_cast<std::size_t>(num_nodes()));
    if (upstream.shape != tape.vals[static_cast<std::size_t>(wrt)].shape &&
        !(node(wrt).kind == OpKind::Param && upstream.shape == values_[static_cast<std::size_t>(wrt)].shape))
        throw std::invalid_argument("upstream gradient shape must match the differentiated node");
    grads.g[static_cast<std::size_t>(wrt)] = upstream;

    auto ensure = [&](int id) -> TensorT<T>& {
        auto& t = grads.g[static_cast<std::size_t>(id)];
        if (t.data.empty()) t = TensorT<T>(value_of(id, tape).shape);
        return t;
    };
    auto accumulate = [&](int id, const TensorT<T>& delta) {
        auto& t = ensure(id);
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += delta.data[i];
    };

    for (int id = wrt; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!grads.has(id) || n.inputs.empty()) continue;
        const auto& gy = grads.g[static_cast<std::size_t>(id)];
        auto val = [&](std::size_t i) -> const TensorT<T>& { return value_of(n.inputs[i], tape); };
        switch (n.kind) {
            case OpKind::Conv2d: {
                TensorT<T> dx, dw, db;
                ops::conv2d_backward(val(0), val(1), gy, n.attrs, dx, dw, db);
                accumulate(n.inputs[0], dx);
                accumulate(n.inputs[1], dw);
                accumulate(n.inputs[2], db);
                break;
            }
            case OpKind::AvgPool2d: {
                TensorT<T> dx;
                ops::avg_pool2d_backward(val(0), gy, n.attrs, dx);
                accumulate(n.inputs[0], dx);
                break;
            }
            case OpKind::MaxPool2d:
                ops::max_pool2d_backward(gy, tape.aux[static_cast<std::size_t>(id)], ensure(n.inputs[0]));
                break;
            case OpKind::GlobalMaxPool:
                ops::global_max_pool_backward(gy, tape.aux[static_cast<std::size_t>(id)], ensure(n.inputs[0]));
                break;
            case OpKind::BatchNorm: {
                TensorT<T> dx, dgamma, dbeta;
                ops::batch_norm_backward(val(0), val(1), tape.bn_save_mean[static_cast<std::size_t>(id)],
                                         tape.bn_save_var[static_cast<std::size_t>(id)], gy, n.attrs,
                                         tape.mode == Mode::Training, bn_mean_[static_cast<std::size_t>(id)],
                                         bn_var_[static_cast<std::size_t>(id)], dx, dgamma, dbeta);
                accumulate(n.inputs[0], dx);
                accumulate(n.inputs[1], dgamma);
                accumulate(n.inputs[2], dbeta);
                break;
            }
            case OpKind::LeakyRelu: {
                TensorT<T> dx;
                ops::leaky_relu_backward(val(0), gy, n.attrs, dx);
                accumulate(n.inputs[0], dx);
                break;
            }
            case OpKind::Relu: {
                TensorT<T> dx;
                ops::relu_backward(val(0), gy, dx);
                accumulate(n.inputs[0], dx);
                break;
            }
            case OpKind::Sigmoid: {
                TensorT<T> dx;
                ops::sigmoid_backward(tape.vals[static_cast<std::size_t>(id)], gy, dx);
                accumulate(n.inputs[0], dx);
                break;
            }
            case OpKind::Dense: {
                TensorT<T> dx, dw, db;
                ops::dense_backward(val(0), val(1), gy, dx, dw, db);
                accumulate(n.inputs[0], dx);
                accumulate(n.inputs[1], dw);
                accumulate(n.inputs[2], db);
                break;
            }
            case OpKind::ConcatChannels: {
                std::vector<const TensorT<T>*> xs;
                std::vector<TensorT<T>*> dxs;
                for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                    xs.push_back(&val(i));
                    dxs.push_back(&ensure(n.inputs[i]));
                }
                ops::concat_channels_backward(xs, gy, dxs);
                break;
            }
            case OpKind::UpsampleNearest2x:
                ops::upsample_nearest2x_backward(gy, ensure(n.inputs[0]));
                break;
            case OpKind::Add:
                accumulate(n.inputs[0], gy);
                accumulate(n.inputs[1], gy);
                break;
            case OpKind::Mse: {
                TensorT<T> dp, dt;
                ops::mse_backward(val(0), val(1), gy, dp, dt);
                accumulate(n.inputs[0], dp);
                accumulate(n.inputs[1], dt);
                break;
            }
            default:
                break;
        }
    }
    return grads;
}

template <typename T>
ParamSnapshot<T> GraphT<T>::snapshot() const {
    return ParamSnapshot<T>{values_, bn_mean_, bn_var_};
}

template <typename T>
void GraphT<T>::restore(const ParamSnapshot<T>& s) {
    values_ = s.values;
    bn_mean_ = s.bn_mean;
    bn_var_ = s.bn_var;
}

template <typename T>
std::vector<std::pair<std::string, TensorT<T>*>> GraphT<T>::named_tensors() {
    std::vector<std::pair<std::string, TensorT<T>*>> out;
    for (int id = 0; id < num_nodes(); ++id) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (n.kind == OpKind::Param) out.emplace_back(n.name, &values_[static_cast<std::size_t>(id)]);
        if (n.kind == OpKind::BatchNorm) {
            out.emplace_back(n.name + ".running_mean", &bn_mean_[static_cast<std::size_t>(id)]);
            out.emplace_back(n.name + ".running_var", &bn_var_[static_cast<std::size_t>(id)]);
        }
    }
    return out;
}

template class GraphT<float>;
template class GraphT<double>;

}  // namespace stenonet
