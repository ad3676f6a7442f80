#pragma once

#include <functional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "stenonet/graph.hpp"
#include "stenonet/optimizer.hpp"

namespace stenonet {

/// Training schedule: up to 100 epochs, early stop after 20 epochs without
/// validation improvement, learning rate multiplied by 0.2 after 5, batch
/// size 2.
struct TrainConfig {
    int max_epochs = 100;
    int early_stop_patience = 20;
    int lr_reduce_patience = 5;
    double lr_reduce_factor = 0.2;
    int batch_size = 2;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    void validate() const {
        if (max_epochs < 1 || early_stop_patience < 1 || lr_reduce_patience < 1)
            throw std::invalid_argument("train config: epochs and patiences must be >= 1");
        if (!(lr_reduce_factor > 0.0 && lr_reduce_factor < 1.0))
            throw std::invalid_argument("train config: lr factor must lie in (0, 1)");
        if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
    }
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_metric = 0.0;
    double learning_rate = 0.0;
    bool improved = false;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val = 0.0;
    int lr_reductions = 0;
    int skipped_steps = 0;  // steps dropped because a gradient was non-finite
    bool early_stopped = false;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int epoch)
        : std::runtime_error("training diverged (non-finite loss) at epoch " + std::to_string(epoch)),
          epoch(epoch) {}
    int epoch;
};

/// One optimizer step's ingredients, produced by a task adapter: the batch
/// mean loss and the parameter gradients (the adapter has already run
/// forward/backward and committed batch-norm updates).
struct StepResult {
    double loss = 0.0;
    Grads<float> grads;
};

using StepFn = std::function<StepResult(const std::vector<int>& batch, Rng& rng)>;
using ValidateFn = std::function<double()>;  // lower is better

/// Runs the full schedule: shuffled mini-batches, Adam, plateau learning
/// rate reduction, early stopping, best-epoch weight restoration. The
/// per-epoch log is written as JSON lines when `log` is given.
TrainResult run_training(Graph& model, const TrainConfig& cfg, int n_train, const StepFn& step,
                         const ValidateFn& validate, std::ostream* log = nullptr);

}  // namespace stenonet
