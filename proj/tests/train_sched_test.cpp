#include <doctest.h>

#include "stenonet/train.hpp"

using namespace stenonet;

namespace {

Graph one_param_graph(int* param_node) {
    Graph g;
    int x = g.input("x", {-1, 1});
    *param_node = g.param("w", "grp", TensorF({1, 1}, 0.5f));
    int b = g.param("b", "grp", TensorF({1}));
    g.op(OpKind::Dense, {x, *param_node, b});
    return g;
}

StepFn constant_grad_step(Graph& g, int param_node, float grad_value) {
    return [&g, param_node, grad_value](const std::vector<int>&, Rng&) {
        StepResult sr;
        sr.loss = 1.0;
        sr.grads.g.resize(static_cast<std::size_t>(g.num_nodes()));
        sr.grads.g[static_cast<std::size_t>(param_node)] = TensorF({1, 1}, grad_value);
        return sr;
    };
}

// improves once at the first epoch, then never again
ValidateFn rigged_validation(int* calls) {
    return [calls]() {
        (*calls)++;
        return *calls == 1 ? 1.0 : 2.0;
    };
}

}  // namespace

TEST_CASE("early stopping fires after exactly 20 non-improving epochs") {
    int pn = -1;
    Graph g = one_param_graph(&pn);
    TrainConfig cfg;
    cfg.batch_size = 2;
    int calls = 0;
    const TrainResult r =
        run_training(g, cfg, 4, constant_grad_step(g, pn, 0.0f), rigged_validation(&calls));
    CHECK(r.early_stopped);
    CHECK(r.best_epoch == 0);
    // epoch 0 improves; epochs 1..20 do not; training stops at epoch 20
    CHECK(r.history.size() == 21);
    CHECK(r.history.back().epoch == 20);
    for (std::size_t i = 1; i < r.history.size(); ++i) CHECK_FALSE(r.history[i].improved);
}

TEST_CASE("learning rate drops by exactly 0.2x after a 5-epoch plateau") {
    int pn = -1;
    Graph g = one_param_graph(&pn);
    TrainConfig cfg;
    cfg.max_epochs = 7;  // 6 non-improving epochs after the first
    int calls = 0;
    const TrainResult r =
        run_training(g, cfg, 4, constant_grad_step(g, pn, 0.0f), rigged_validation(&calls));
    CHECK(r.lr_reductions == 1);
    // epochs 0..5 run at the base rate; the reduction lands at the end of
    // epoch 5 (the fifth non-improving epoch), so epoch 6 trains at 0.2x
    for (int e = 0; e <= 5; ++e)
        CHECK(r.history[static_cast<std::size_t>(e)].learning_rate == doctest::Approx(1e-3));
    CHECK(r.history[6].learning_rate == doctest::Approx(2e-4));
}

TEST_CASE("a full plateau run reduces at epochs 5, 10, 15 and 20") {
    int pn = -1;
    Graph g = one_param_graph(&pn);
    TrainConfig cfg;
    int calls = 0;
    const TrainResult r =
        run_training(g, cfg, 4, constant_grad_step(g, pn, 0.0f), rigged_validation(&calls));
    CHECK(r.lr_reductions == 4);
}

TEST_CASE("the restored weights are those of the best validation epoch") {
    TrainConfig cfg;
    cfg.seed = 9;

    // run A: stop right after the improving epoch
    int pa = -1;
    Graph ga = one_param_graph(&pa);
    TrainConfig one = cfg;
    one.max_epochs = 1;
    int calls_a = 0;
    run_training(ga, one, 4, constant_grad_step(ga, pa, 0.3f), rigged_validation(&calls_a));
    const TensorF after_best_epoch = ga.param_value(pa);

    // run B: full schedule keeps mutating weights but must restore epoch 0
    int pb = -1;
    Graph gb = one_param_graph(&pb);
    int calls_b = 0;
    const TrainResult rb =
        run_training(gb, cfg, 4, constant_grad_step(gb, pb, 0.3f), rigged_validation(&calls_b));
    CHECK(rb.best_epoch == 0);
    CHECK(gb.param_value(pb).data == after_best_epoch.data);
}

TEST_CASE("non-finite loss aborts with the epoch index") {
    int pn = -1;
    Graph g = one_param_graph(&pn);
    TrainConfig cfg;
    StepFn bad = [&](const std::vector<int>&, Rng&) {
        StepResult sr;
        sr.loss = std::numeric_limits<double>::quiet_NaN();
        sr.grads.g.resize(static_cast<std::size_t>(g.num_nodes()));
        return sr;
    };
    try {
        run_training(g, cfg, 4, bad, [] { return 1.0; });
        FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
        CHECK(e.epoch == 0);
    }
}

TEST_CASE("non-finite gradients are counted as skipped steps, not applied") {
    int pn = -1;
    Graph g = one_param_graph(&pn);
    const TensorF before = g.param_value(pn);
    TrainConfig cfg;
    cfg.max_epochs = 1;
    StepFn inf_grads = [&](const std::vector<int>&, Rng&) {
        StepResult sr;
        sr.loss = 1.0;
        sr.grads.g.resize(static_cast<std::size_t>(g.num_nodes()));
        sr.grads.g[static_cast<std::size_t>(pn)] =
            TensorF({1, 1}, std::numeric_limits<float>::infinity());
        return sr;
    };
    const TrainResult r = run_training(g, cfg, 4, inf_grads, [] { return 1.0; });
    CHECK(r.skipped_steps == 2);  // 4 samples / batch 2
    CHECK(g.param_value(pn).data == before.data);
}

TEST_CASE("empty training splits are rejected") {
    int pn = -1;
    Graph g = one_param_graph(&pn);
    TrainConfig cfg;
    CHECK_THROWS_AS(run_training(g, cfg, 0, constant_grad_step(g, pn, 0.0f), [] { return 1.0; }),
                    std::invalid_argument);
}

TEST_CASE("config validation rejects bad schedules") {
    TrainConfig cfg;
    cfg.lr_reduce_factor = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.early_stop_patience = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("identical seeds give identical histories") {
    TrainConfig cfg;
    cfg.max_epochs = 6;
    cfg.seed = 42;
    auto run_once = [&]() {
        int pn = -1;
        Graph g = one_param_graph(&pn);
        Rng noise(7);
        StepFn step = [&g, pn, &noise](const std::vector<int>& batch, Rng& rng) {
            StepResult sr;
            sr.loss = rng.uniform() + 0.1 * batch[0];
            sr.grads.g.resize(static_cast<std::size_t>(g.num_nodes()));
            sr.grads.g[static_cast<std::size_t>(pn)] = TensorF({1, 1}, static_cast<float>(rng.normal()));
            return sr;
        };
        ValidateFn val = [&g, pn]() { return std::abs(static_cast<double>(g.param_value(pn).data[0])); };
        return run_training(g, cfg, 8, step, val);
    };
    const TrainResult a = run_once();
    const TrainResult b = run_once();
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
        CHECK(a.history[i].val_metric == b.history[i].val_metric);
    }
}
