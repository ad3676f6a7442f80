#include <doctest.h>

#include "stenonet/gradcheck.hpp"

using namespace stenonet;

TEST_CASE("conv2d 3x3 on an 8x8 input passes the finite-difference check") {
    Rng rng(11);
    GraphT<double> g;
    int x = g.input("x", {-1, 2, 8, 8});
    TensorD w({3, 2, 3, 3});
    for (auto& v : w.data) v = 0.3 * rng.normal();
    TensorD b({3});
    for (auto& v : b.data) v = 0.1 * rng.normal();
    OpAttrs a;
    a.pad = 1;
    int out = g.op(OpKind::Conv2d, {x, g.param("w", "p", w), g.param("b", "p", b)}, a);
    TensorD xin({1, 2, 8, 8});
    for (auto& v : xin.data) v = rng.normal();
    auto rep = grad_check_graph(g, {{"x", xin}}, out, rng);
    CHECK(rep.pass);
    CHECK(rep.max_rel_error <= 1e-3);
}

TEST_CASE("max_pool2d with strictly distinct inputs passes") {
    Rng rng(12);
    auto rep = grad_check_op(OpKind::MaxPool2d, rng);
    CHECK(rep.pass);
    CHECK_FALSE(rep.inconclusive);
}

TEST_CASE("batch_norm with a batch of 4 passes") {
    Rng rng(13);
    auto rep = grad_check_op(OpKind::BatchNorm, rng);
    CHECK(rep.pass);
}

TEST_CASE("randomized multi-op graph matches central finite differences") {
    // conv -> batch_norm -> leaky_relu -> max_pool -> residual add path
    for (std::uint64_t seed = 21; seed < 26; ++seed) {
        Rng rng(seed);
        GraphT<double> g;
        int x = g.input("x", {-1, 2, 8, 8});
        TensorD w({2, 2, 3, 3}), b({2}), gamma({2}, 1.0), beta({2});
        for (auto& v : w.data) v = 0.4 * rng.normal();
        for (auto& v : b.data) v = 0.1 * rng.normal();
        OpAttrs conv_a;
        conv_a.pad = 1;
        int c = g.op(OpKind::Conv2d, {x, g.param("w", "p", w), g.param("b", "p", b)}, conv_a);
        int bn = g.op(OpKind::BatchNorm, {c, g.param("gamma", "p", gamma), g.param("beta", "p", beta)}, {}, "bn");
        OpAttrs act;
        act.leak = 0.1;
        int lr = g.op(OpKind::LeakyRelu, {bn}, act);
        int res = g.op(OpKind::Add, {lr, x});
        OpAttrs pool;
        pool.kernel_h = pool.kernel_w = 2;
        pool.stride = 2;
        int out = g.op(OpKind::MaxPool2d, {res}, pool);

        TensorD xin({2, 2, 8, 8});
        for (auto& v : xin.data) v = rng.normal();
        auto rep = grad_check_graph(g, {{"x", xin}}, out, rng);
        CHECK_MESSAGE(rep.pass, "seed ", seed, ": ", rep.detail);
        CHECK(rep.max_rel_error <= 1e-3);
    }
}

TEST_CASE("the suite covers every op kind and loss at small instance counts") {
    GradCheckSuite suite = run_grad_check_suite(/*instances=*/3, 1e-3, 99);
    for (const auto& rep : suite.reports) {
        const bool ok = rep.pass && !rep.inconclusive;
        CHECK_MESSAGE(ok, rep.what, ": ", rep.detail, " max_rel=", rep.max_rel_error);
    }
    CHECK(suite.all_pass);
}
