#include <doctest.h>

#include "stenonet/graph.hpp"
#include "stenonet/optimizer.hpp"

using namespace stenonet;

namespace {

Graph tiny_graph(int* out_node, int* w_node) {
    Graph g;
    int x = g.input("x", {-1, 2});
    TensorF w({1, 2}, {0.5f, -0.25f});
    int wp = g.param("dense.w", "grp", w);
    int bp = g.param("dense.b", "grp", TensorF({1}));
    *w_node = wp;
    *out_node = g.op(OpKind::Dense, {x, wp, bp});
    return g;
}

}  // namespace

TEST_CASE("all-zero gradients leave parameters unchanged") {
    int out, wp;
    Graph g = tiny_graph(&out, &wp);
    const TensorF before = g.param_value(wp);
    Grads<float> grads;
    grads.g.resize(static_cast<std::size_t>(g.num_nodes()));
    grads.g[static_cast<std::size_t>(wp)] = TensorF({1, 2});  // zeros
    AdamF adam;
    CHECK(adam.step(g, grads));
    CHECK(g.param_value(wp).data == before.data);
}

TEST_CASE("frozen groups stay bit-identical under nonzero gradients") {
    int out, wp;
    Graph g = tiny_graph(&out, &wp);
    g.set_group_frozen("grp", true);
    const TensorF before = g.param_value(wp);
    Grads<float> grads;
    grads.g.resize(static_cast<std::size_t>(g.num_nodes()));
    grads.g[static_cast<std::size_t>(wp)] = TensorF({1, 2}, 3.0f);
    AdamF adam;
    CHECK(adam.step(g, grads));
    CHECK(g.param_value(wp).data == before.data);

    g.set_group_frozen("grp", false);
    CHECK(adam.step(g, grads));
    CHECK(g.param_value(wp).data != before.data);
}

TEST_CASE("non-finite gradients skip the whole step") {
    int out, wp;
    Graph g = tiny_graph(&out, &wp);
    const TensorF before = g.param_value(wp);
    Grads<float> grads;
    grads.g.resize(static_cast<std::size_t>(g.num_nodes()));
    grads.g[static_cast<std::size_t>(wp)] =
        TensorF({1, 2}, {std::numeric_limits<float>::quiet_NaN(), 1.0f});
    AdamF adam;
    CHECK_FALSE(adam.step(g, grads));
    CHECK(g.param_value(wp).data == before.data);
}

TEST_CASE("missing feeds and bad feed shapes are rejected") {
    int out, wp;
    Graph g = tiny_graph(&out, &wp);
    CHECK_THROWS_AS(g.forward({}, Mode::Inference), std::runtime_error);
    CHECK_THROWS_AS(g.forward({{"x", TensorF({1, 3})}}, Mode::Inference), std::runtime_error);
}

TEST_CASE("census counts nodes per kind") {
    int out, wp;
    Graph g = tiny_graph(&out, &wp);
    auto c = g.census();
    CHECK(c[OpKind::Dense] == 1);
    CHECK(c[OpKind::Param] == 2);
    CHECK(c[OpKind::Input] == 1);
}

TEST_CASE("forward is deterministic and snapshot/restore round-trips") {
    int out, wp;
    Graph g = tiny_graph(&out, &wp);
    TensorF x({3, 2});
    Rng rng(5);
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    auto t1 = g.forward({{"x", x}}, Mode::Inference);
    auto t2 = g.forward({{"x", x}}, Mode::Inference);
    CHECK(t1.vals[static_cast<std::size_t>(out)].data == t2.vals[static_cast<std::size_t>(out)].data);

    auto snap = g.snapshot();
    g.param_value(wp).data[0] += 1.0f;
    auto t3 = g.forward({{"x", x}}, Mode::Inference);
    CHECK(t3.vals[static_cast<std::size_t>(out)].data != t1.vals[static_cast<std::size_t>(out)].data);
    g.restore(snap);
    auto t4 = g.forward({{"x", x}}, Mode::Inference);
    CHECK(t4.vals[static_cast<std::size_t>(out)].data == t1.vals[static_cast<std::size_t>(out)].data);
}

TEST_CASE("backward rejects upstream of the wrong shape") {
    int out, wp;
    Graph g = tiny_graph(&out, &wp);
    TensorF x({2, 2}, 1.0f);
    auto tape = g.forward({{"x", x}}, Mode::Training);
    CHECK_THROWS_AS(g.backward(tape, out, TensorF({3, 1}, 1.0f)), std::invalid_argument);
}

TEST_CASE("batch-norm running averages update with momentum 0.9") {
    Graph g;
    int x = g.input("x", {-1, 1, 2, 2});
    int gamma = g.param("bn.gamma", "grp", TensorF({1}, 1.0f));
    int beta = g.param("bn.beta", "grp", TensorF({1}, 0.0f));
    int bn = g.op(OpKind::BatchNorm, {x, gamma, beta}, {}, "bn");
    (void)bn;

    TensorF xin({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    auto tape = g.forward({{"x", xin}}, Mode::Training);
    g.commit_bn_updates(tape);
    const int bn_node = g.find("bn");
    // batch mean 2.5, biased variance 1.25; running starts at (0, 1)
    CHECK(g.bn_running_mean(bn_node).data[0] == doctest::Approx(0.1 * 2.5));
    CHECK(g.bn_running_var(bn_node).data[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.25));
}
