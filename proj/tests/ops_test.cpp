#include <doctest.h>

#include "stenonet/graph.hpp"
#include "stenonet/ops.hpp"

using namespace stenonet;

namespace {

TensorF random_image(std::vector<int> shape, Rng& rng) {
    TensorF t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    return t;
}

}  // namespace

TEST_CASE("conv2d with a 1x1 identity kernel reproduces the image") {
    Rng rng(1);
    TensorF x = random_image({2, 1, 6, 7}, rng);
    TensorF w({1, 1, 1, 1});
    w.data[0] = 1.0f;
    TensorF b({1});
    OpAttrs a;
    a.kernel_h = a.kernel_w = 1;
    TensorF y = ops::conv2d_forward(x, w, b, a);
    REQUIRE(y.shape == x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("avg_pool2d keeps a constant image constant at half resolution") {
    TensorF x({1, 2, 8, 8}, 3.25f);
    OpAttrs a;
    a.kernel_h = a.kernel_w = 2;
    a.stride = 2;
    TensorF y = ops::avg_pool2d_forward(x, a);
    CHECK(y.shape == std::vector<int>{1, 2, 4, 4});
    for (float v : y.data) CHECK(v == doctest::Approx(3.25f));
}

TEST_CASE("sigmoid of zero logits is one half everywhere") {
    TensorF x({1, 1, 3, 3}, 0.0f);
    TensorF y = ops::sigmoid_forward(x);
    for (float v : y.data) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("dense gradient w.r.t. weights is the input under unit upstream") {
    TensorF x({1, 3}, {2.0f, -1.0f, 0.5f});
    TensorF w({1, 3}, {0.1f, 0.2f, 0.3f});
    TensorF b({1});
    TensorF dy({1, 1}, 1.0f);
    TensorF dx, dw, db;
    ops::dense_backward(x, w, dy, dx, dw, db);
    CHECK(dw.data[0] == doctest::Approx(2.0));
    CHECK(dw.data[1] == doctest::Approx(-1.0));
    CHECK(dw.data[2] == doctest::Approx(0.5));
    CHECK(db.data[0] == doctest::Approx(1.0));
    for (int i = 0; i < 3; ++i) CHECK(dx.data[static_cast<std::size_t>(i)] == doctest::Approx(w.data[static_cast<std::size_t>(i)]));
}

TEST_CASE("leaky_relu passes the leak slope below zero") {
    TensorF x({1, 1, 1, 1}, -2.0f);
    OpAttrs a;
    a.leak = 0.1;
    TensorF dy({1, 1, 1, 1}, 1.0f);
    TensorF dx;
    ops::leaky_relu_backward(x, dy, a, dx);
    CHECK(dx.data[0] == doctest::Approx(0.1));
    TensorF y = ops::leaky_relu_forward(x, a);
    CHECK(y.data[0] == doctest::Approx(-0.2));
}

TEST_CASE("concat_channels followed by slicing recovers the inputs exactly") {
    Rng rng(2);
    TensorF a = random_image({2, 3, 4, 5}, rng);
    TensorF b = random_image({2, 1, 4, 5}, rng);
    TensorF c = random_image({2, 2, 4, 5}, rng);
    TensorF y = ops::concat_channels_forward<float>({&a, &b, &c});
    REQUIRE(y.shape == std::vector<int>{2, 6, 4, 5});
    const std::vector<const TensorF*> parts{&a, &b, &c};
    for (int n = 0; n < 2; ++n) {
        int coff = 0;
        for (const auto* part : parts) {
            for (int ch = 0; ch < part->shape[1]; ++ch)
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 5; ++j)
                        CHECK(y.at(n, coff + ch, i, j) == part->at(n, ch, i, j));
            coff += part->shape[1];
        }
    }
}

TEST_CASE("mse examples") {
    TensorF p({2, 1}, {0.9f, 0.7f});
    TensorF t({2, 1}, {0.7f, 0.7f});
    TensorF y = ops::mse_forward(p, t);
    CHECK(y.data[0] == doctest::Approx(0.02));  // mean of 0.04 and 0
    TensorF same = ops::mse_forward(t, t);
    CHECK(same.data[0] == doctest::Approx(0.0));
}

TEST_CASE("forward passes are bit-identical for identical inputs") {
    Rng rng(3);
    TensorF x = random_image({2, 3, 12, 12}, rng);
    TensorF w = random_image({4, 3, 3, 3}, rng);
    TensorF b = random_image({4}, rng);
    OpAttrs a;
    a.pad = 1;
    TensorF y1 = ops::conv2d_forward(x, w, b, a);
    TensorF y2 = ops::conv2d_forward(x, w, b, a);
    CHECK(y1.data == y2.data);
}

TEST_CASE("shape mismatches are rejected naming the offending node") {
    GraphT<float> g;
    int x = g.input("x", {-1, 3, 8, 8});
    TensorF w({4, 2, 3, 3});  // wrong input channel count
    OpAttrs a;
    int wp = g.param("w", "p", w);
    int bp = g.param("b", "p", TensorF({4}));
    CHECK_THROWS_WITH_AS(g.op(OpKind::Conv2d, {x, wp, bp}, a, "bad_conv"),
                         doctest::Contains("bad_conv"), std::runtime_error);
}

TEST_CASE("max_pool ties route gradient to the first maximum") {
    TensorF x({1, 1, 2, 2}, 1.0f);  // all equal: tie
    OpAttrs a;
    a.kernel_h = a.kernel_w = 2;
    a.stride = 2;
    std::vector<std::int64_t> argmax;
    TensorF y = ops::max_pool2d_forward(x, a, argmax);
    CHECK(y.data[0] == 1.0f);
    CHECK(argmax[0] == 0);  // deterministic tie-break
}

TEST_CASE("batch_norm inference uses running statistics, not batch composition") {
    Rng rng(4);
    TensorF x = random_image({4, 2, 3, 3}, rng);
    TensorF gamma({2}, 1.0f), beta({2}, 0.0f);
    TensorF rm({2}, 0.5f), rv({2}, 2.0f);
    OpAttrs a;
    TensorF save_m, save_v;
    TensorF y = ops::batch_norm_forward(x, gamma, beta, rm, rv, /*training=*/false, a, save_m, save_v);
    // element depends only on its own value and the running stats
    TensorF x2 = x;
    for (int n = 1; n < 4; ++n)
        for (std::size_t i = 0; i < 2ul * 3 * 3; ++i)
            x2.data[static_cast<std::size_t>(n) * 2 * 3 * 3 + i] += 10.0f;  // perturb other batch items
    TensorF y2 = ops::batch_norm_forward(x2, gamma, beta, rm, rv, false, a, save_m, save_v);
    for (std::size_t i = 0; i < 2ul * 3 * 3; ++i) CHECK(y.data[i] == y2.data[i]);
}
