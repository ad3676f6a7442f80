#include "stenonet/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace stenonet {

TrainResult run_training(Graph& model, const TrainConfig& cfg, int n_train, const StepFn& step,
                         const ValidateFn& validate, std::ostream* log) {
    cfg.validate();
    if (n_train < 1) throw std::invalid_argument("run_training: empty training split");

    Rng rng(cfg.seed);
    AdamF adam({cfg.learning_rate});
    TrainResult result;
    ParamSnapshot<float> best = model.snapshot();
    double best_val = std::numeric_limits<double>::infinity();
    int since_improvement = 0;
    int since_lr_event = 0;  // epochs since the last improvement or reduction

    std::vector<int> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng = rng.fork(static_cast<std::uint64_t>(epoch) * 2 + 1);
        Rng aug_rng = rng.fork(static_cast<std::uint64_t>(epoch) * 2 + 2);
        shuffle_rng.shuffle(order.begin(), order.end());

        double loss_acc = 0.0;
        std::int64_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(
                                                       std::min(start + cfg.batch_size, order.size())));
            StepResult sr = step(batch, aug_rng);
            if (!std::isfinite(sr.loss)) throw TrainingDiverged(epoch);
            if (!adam.step(model, sr.grads)) result.skipped_steps++;
            loss_acc += sr.loss * static_cast<double>(batch.size());
            seen += static_cast<std::int64_t>(batch.size());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_acc / static_cast<double>(seen);
        stats.val_metric = validate();
        if (!std::isfinite(stats.val_metric)) throw TrainingDiverged(epoch);
        stats.learning_rate = adam.learning_rate();
        stats.improved = stats.val_metric < best_val;
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        if (stats.improved) {
            best_val = stats.val_metric;
            result.best_epoch = epoch;
            best = model.snapshot();
            since_improvement = 0;
            since_lr_event = 0;
        } else {
            since_improvement++;
            since_lr_event++;
        }
        if (since_lr_event >= cfg.lr_reduce_patience) {
            adam.set_learning_rate(adam.learning_rate() * cfg.lr_reduce_factor);
            result.lr_reductions++;
            since_lr_event = 0;
        }

        result.history.push_back(stats);
        if (log) {
            nlohmann::json j{{"epoch", stats.epoch},     {"train_loss", stats.train_loss},
                             {"val_metric", stats.val_metric}, {"learning_rate", stats.learning_rate},
                             {"improved", stats.improved},     {"seconds", stats.seconds}};
            (*log) << j.dump() << "\n";
        }
        if (since_improvement >= cfg.early_stop_patience) {
            result.early_stopped = true;
            break;
        }
    }

    result.best_val = best_val;
    model.restore(best);
    return result;
}

}  // namespace stenonet
