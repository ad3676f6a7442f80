#pragma once

#include <map>
#include <string>
#include <vector>

#include "stenonet/ops.hpp"
#include "stenonet/tensor.hpp"

namespace stenonet {

enum class Mode { Training, Inference };

/// Forward-pass record: node values plus whatever the backward pass needs
/// (pool argmaxes, batch-norm batch statistics).
template <typename T>
struct Tape {
    Mode mode = Mode::Inference;
    std::vector<TensorT<T>> vals;
    std::vector<std::vector<std::int64_t>> aux;
    std::vector<TensorT<T>> bn_save_mean, bn_save_var;
};

/// Per-node gradient accumulators; empty tensor means "no gradient flowed".
template <typename T>
struct Grads {
    std::vector<TensorT<T>> g;
    bool has(int node) const { return node >= 0 && node < static_cast<int>(g.size()) && !g[node].data.empty(); }
};

/// Copy of all trainable values and batch-norm running statistics; used for
/// best-epoch weight restoration.
template <typename T>
struct ParamSnapshot {
    std::vector<TensorT<T>> values, bn_mean, bn_var;
};

/// A static, topologically ordered compute graph. Nodes are appended by the
/// builders; an op's inputs must already exist. Parameters live inside the
/// graph and carry a group label so whole modules can be frozen.
template <typename T>
class GraphT {
public:
    struct Node {
        OpKind kind = OpKind::Input;
        OpAttrs attrs;
        std::vector<int> inputs;
        std::string name;   // required for Input/Param/BatchNorm, optional otherwise
        std::string group;  // parameter group (Param nodes)
        std::vector<int> shape;  // inferred; shape[0] == -1 stands for the batch dim
    };

    int input(const std::string& name, std::vector<int> shape);
    int param(const std::string& name, const std::string& group, TensorT<T> init);
    int op(OpKind kind, std::vector<int> inputs, OpAttrs attrs = {}, const std::string& name = {});

    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    const std::vector<int>& out_shape(int id) const { return nodes_.at(static_cast<std::size_t>(id)).shape; }

    TensorT<T>& param_value(int id);
    const TensorT<T>& param_value(int id) const;
    TensorT<T>& bn_running_mean(int id) { return bn_mean_.at(static_cast<std::size_t>(id)); }
    TensorT<T>& bn_running_var(int id) { return bn_var_.at(static_cast<std::size_t>(id)); }

    std::vector<int> param_ids() const;
    int find(const std::string& name) const;  // -1 when absent

    void set_group_frozen(const std::string& group, bool frozen);
    void set_all_frozen(bool frozen);
    bool is_frozen(int param_id) const;

    /// Count of nodes per op kind; backs the architecture census assertions.
    std::map<OpKind, int> census() const;

    Tape<T> forward(const std::map<std::string, TensorT<T>>& feeds, Mode mode) const;
    /// Folds the tape's batch statistics into the running averages
    /// (momentum update); call once per optimizer step.
    void commit_bn_updates(const Tape<T>& tape);

    /// Reverse-mode gradients of sum(upstream * node `wrt`) for every
    /// parameter and input reachable from `wrt`.
    Grads<T> backward(const Tape<T>& tape, int wrt, const TensorT<T>& upstream) const;

    ParamSnapshot<T> snapshot() const;
    void restore(const ParamSnapshot<T>& s);

    /// All named persistent tensors (parameters and batch-norm running
    /// statistics); the checkpoint format serializes exactly these.
    std::vector<std::pair<std::string, TensorT<T>*>> named_tensors();

private:
    const TensorT<T>& value_of(int id, const Tape<T>& tape) const;
    std::vector<int> infer_shape(const Node& n) const;

    std::vector<Node> nodes_;
    std::vector<TensorT<T>> values_;   // per node; only Param ids are non-empty
    std::vector<TensorT<T>> bn_mean_, bn_var_;
    std::map<std::string, bool> frozen_groups_;
    std::map<std::string, int> by_name_;
};

using Graph = GraphT<float>;

}  // namespace stenonet
