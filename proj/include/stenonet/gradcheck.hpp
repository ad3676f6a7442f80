#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stenonet/graph.hpp"
#include "stenonet/tensor.hpp"

namespace stenonet {

struct GradCheckReport {
    std::string what;
    double max_rel_error = 0.0;
    bool pass = false;
    /// Set when a non-differentiable point kept being sampled (max-pool
    /// ties, relu kinks) and retries ran out.
    bool inconclusive = false;
    int retries = 0;
    std::string detail;
};

/// Central finite difference of a scalar functional, default step 1e-5.
TensorD fd_gradient(const std::function<double(const TensorD&)>& f, TensorD x, double step = 1e-5);

/// Element-wise comparison: relative error against tolerance, absolute error
/// (<= abs_floor) for near-zero entries.
bool grads_close(const TensorD& analytic, const TensorD& numeric, double tol, double abs_floor,
                 double* max_rel_error);

/// Checks every parameter and input gradient of `graph` at the given feeds
/// against central differences of a random scalar projection of `output`.
GradCheckReport grad_check_graph(GraphT<double>& graph, const std::map<std::string, TensorD>& feeds,
                                 int output, Rng& rng, double tol = 1e-3, double step = 1e-5);

/// Builds a small single-op graph of the given kind with random shapes drawn
/// from `rng` and grad-checks it. Resamples up to 5 times when the drawn
/// point is non-differentiable.
GradCheckReport grad_check_op(OpKind kind, Rng& rng, double tol = 1e-3);

struct GradCheckSuite {
    std::vector<GradCheckReport> reports;
    bool all_pass = true;
};

/// The full suite: every op kind plus the training losses, `instances`
/// random draws each.
GradCheckSuite run_grad_check_suite(int instances, double tol, std::uint64_t seed);

}  // namespace stenonet
