#include <doctest.h>

#include <cmath>

#include "stenonet/gradcheck.hpp"
#include "stenonet/losses.hpp"
#include "stenonet/ops.hpp"

using namespace stenonet;

namespace {

LabelGrid one_hot_labels(int k, int i, int j) {
    LabelGrid lg{k, std::vector<std::uint8_t>(static_cast<std::size_t>(k) * k, 0)};
    lg.v[static_cast<std::size_t>(i) * k + j] = 1;
    return lg;
}

}  // namespace

TEST_CASE("grid cross-entropy closed forms at k=15, w=225") {
    const int k = 15;
    const LabelGrid labels = one_hot_labels(k, 4, 7);

    TensorD zeros({k, k});
    const auto flat = weighted_grid_bce(zeros, labels, 225.0);
    CHECK(flat.value == doctest::Approx(449.0 * std::log(2.0)).epsilon(1e-9));

    TensorD sharp({k, k}, -10.0);
    sharp.data[4 * k + 7] = 10.0;
    const auto good = weighted_grid_bce(sharp, labels, 225.0);
    CHECK(good.value == doctest::Approx(449.0 * std::log1p(std::exp(-10.0))).epsilon(1e-9));
    CHECK(good.value == doctest::Approx(0.02038).epsilon(1e-3));
}

TEST_CASE("grid cross-entropy matches a direct per-cell summation oracle") {
    Rng rng(41);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = 15;
        TensorD logits({k, k});
        LabelGrid labels{k, std::vector<std::uint8_t>(static_cast<std::size_t>(k) * k, 0)};
        for (auto& v : logits.data) v = 4.0 * rng.normal();
        for (auto& v : labels.v) v = rng.uniform() < 0.1 ? 1 : 0;
        const double w = 225.0;
        // naive direct form, clamped away from log(0)
        double want = 0.0;
        for (std::size_t i = 0; i < logits.data.size(); ++i) {
            const double p = 1.0 / (1.0 + std::exp(-logits.data[i]));
            if (labels.v[i])
                want += -w * std::log(std::max(p, 1e-300));
            else
                want += -std::log(std::max(1.0 - p, 1e-300));
        }
        const auto got = weighted_grid_bce(logits, labels, w);
        CHECK(got.value == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("grid cross-entropy with w=1 equals the unweighted sum") {
    Rng rng(42);
    TensorD logits({15, 15});
    for (auto& v : logits.data) v = rng.normal();
    LabelGrid labels{15, std::vector<std::uint8_t>(225, 0)};
    for (auto& v : labels.v) v = rng.uniform() < 0.5 ? 1 : 0;
    double unweighted = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double o = logits.data[i];
        const double y = labels.v[i];
        unweighted += std::max(o, 0.0) - o * y + std::log1p(std::exp(-std::abs(o)));
    }
    CHECK(weighted_grid_bce(logits, labels, 1.0).value == doctest::Approx(unweighted).epsilon(1e-12));
}

TEST_CASE("grid cross-entropy rejects non-finite logits") {
    TensorD logits({2, 2}, 0.0);
    logits.data[1] = std::numeric_limits<double>::infinity();
    LabelGrid labels{2, {1, 0, 0, 0}};
    CHECK_THROWS_AS(weighted_grid_bce(logits, labels, 4.0), std::invalid_argument);
}

TEST_CASE("dice loss examples") {
    Mask truth({10, 10});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) truth.at(i, j) = 1;

    TensorD perfect = truth.cast<double>();
    CHECK(dice_loss(perfect, truth).value == doctest::Approx(-1.0).epsilon(1e-7));

    TensorD empty({10, 10});
    CHECK(dice_loss(empty, truth).value == doctest::Approx(0.0).epsilon(1e-6));

    // |U| = |V| = 100 with 50 overlapping pixels
    Mask big_truth({20, 20});
    TensorD big_pred({20, 20});
    for (int i = 0; i < 100; ++i) big_truth.data[static_cast<std::size_t>(i)] = 1;     // first 100 pixels
    for (int i = 50; i < 150; ++i) big_pred.data[static_cast<std::size_t>(i)] = 1.0;   // overlap on [50,100)
    CHECK(dice_loss(big_pred, big_truth).value == doctest::Approx(-0.5).epsilon(1e-6));
}

TEST_CASE("dice is symmetric for binary inputs") {
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        Mask a({8, 8}), b({8, 8});
        for (auto& v : a.data) v = rng.uniform() < 0.4 ? 1 : 0;
        for (auto& v : b.data) v = rng.uniform() < 0.4 ? 1 : 0;
        CHECK(dice_loss(a.cast<double>(), b).value ==
              doctest::Approx(dice_loss(b.cast<double>(), a).value).epsilon(1e-12));
    }
}

TEST_CASE("weight map worked examples at the default constants") {
    const int s = 256;
    Mask lesion({s, s}), silhouette({s, s});
    const PixelPoint center{40, 40};
    lesion.at(40, 40) = 1;                       // lesion pixel at the stenosis center
    silhouette.at(40 + 9, 40 + 12) = 1;          // distance exactly 15
    TensorD pred({s, s}, 0.0);
    pred.data[static_cast<std::size_t>(40) * s + 40] = 0.5;
    const MwceParams params;
    const auto wm = mwce_weight_map(lesion, silhouette, center, pred, params);

    // far background pixel, o = 0 -> w = 1
    CHECK(static_cast<double>(wm.w.data[static_cast<std::size_t>(230) * s + 230]) ==
          doctest::Approx(1.0).epsilon(1e-9));
    // lesion pixel at distance 0 with o = 0.5 -> 3*0.5 + 64*11 = 705.5
    CHECK(static_cast<double>(wm.w.data[static_cast<std::size_t>(40) * s + 40]) ==
          doctest::Approx(705.5).epsilon(1e-9));
    // silhouette pixel at distance sigma -> 128*(1+10/e)
    CHECK(static_cast<double>(wm.w.data[static_cast<std::size_t>(49) * s + 52]) ==
          doctest::Approx(128.0 * (1.0 + 10.0 * std::exp(-1.0))).epsilon(1e-9));
}

TEST_CASE("weight map rejects overlapping masks and out-of-bounds centers") {
    Mask lesion({4, 4}), silhouette({4, 4});
    lesion.at(1, 1) = 1;
    silhouette.at(1, 1) = 1;
    TensorD pred({4, 4});
    CHECK_THROWS_AS(mwce_weight_map(lesion, silhouette, {1, 1}, pred, MwceParams{}), std::invalid_argument);
    silhouette.at(1, 1) = 0;
    CHECK_THROWS_AS(mwce_weight_map(lesion, silhouette, {4, 0}, pred, MwceParams{}), std::invalid_argument);
}

TEST_CASE("weights fall monotonically with distance when masks and predictions are flat") {
    const int s = 64;
    Mask lesion({s, s});
    for (auto& v : lesion.data) v = 1;
    Mask silhouette({s, s});  // silhouette would overlap, keep it empty
    TensorD pred({s, s}, 0.3);
    const PixelPoint center{10, 10};
    const auto wm = mwce_weight_map(lesion, silhouette, center, pred, MwceParams{});
    double prev = 1e300;
    for (int j = 10; j < s; ++j) {  // walk away along a row
        const double w = wm.w.data[static_cast<std::size_t>(10) * s + j];
        CHECK(w <= prev + 1e-12);
        prev = w;
    }
}

TEST_CASE("single lesion pixel at the center with logit zero gives 705.5*ln2") {
    Mask lesion({1, 1});
    lesion.data[0] = 1;
    Mask silhouette({1, 1});
    TensorD logits({1, 1}, 0.0);
    const auto lg = mwce_loss(logits, lesion, silhouette, {0, 0}, MwceParams{});
    CHECK(lg.value == doctest::Approx(705.5 * std::log(2.0)).epsilon(1e-9));
    CHECK(lg.value == doctest::Approx(489.02).epsilon(1e-3));
}

TEST_CASE("degenerate weights reduce the loss to unweighted cross-entropy") {
    // alpha -> 0 is outside the validated domain, so use a tiny alpha and
    // delta with beta = gamma = 1 and compare against the plain CE sum
    Rng rng(44);
    Mask lesion({6, 6}), silhouette({6, 6});
    for (std::size_t i = 0; i < lesion.data.size(); ++i) lesion.data[i] = rng.uniform() < 0.5 ? 1 : 0;
    TensorD logits({6, 6});
    for (auto& v : logits.data) v = rng.normal();
    MwceParams p;
    p.alpha = 1e-12;
    p.beta = 1.0;
    p.gamma = 1.0;
    p.delta = 1e-12;
    const auto lg = mwce_loss(logits, lesion, silhouette, {3, 3}, p);
    double want = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double o = logits.data[i];
        const double y = lesion.data[i];
        want += std::max(o, 0.0) - o * y + std::log1p(std::exp(-std::abs(o)));
    }
    CHECK(lg.value == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("mwce gradient matches finite differences on random 16x16 instances") {
    Rng rng(45);
    for (int trial = 0; trial < 20; ++trial) {
        const int s = 16;
        Mask lesion({s, s}), silhouette({s, s});
        for (std::size_t i = 0; i < lesion.data.size(); ++i) lesion.data[i] = rng.uniform() < 0.3 ? 1 : 0;
        for (std::size_t i = 0; i < silhouette.data.size(); ++i)
            silhouette.data[i] = (!lesion.data[i] && rng.uniform() < 0.3) ? 1 : 0;
        const PixelPoint center{rng.uniform_int(0, s - 1), rng.uniform_int(0, s - 1)};
        MwceParams params;
        params.sigma_bell = 5.0;
        TensorD logits({s, s});
        for (auto& v : logits.data) v = 2.0 * rng.normal();

        const auto lg = mwce_loss(logits, lesion, silhouette, center, params);
        const TensorD numeric = fd_gradient(
            [&](const TensorD& x) { return mwce_loss(x, lesion, silhouette, center, params).value; }, logits);
        double max_rel = 0.0;
        CHECK(grads_close(lg.grad, numeric, 1e-3, 1e-6, &max_rel));
    }
}

TEST_CASE("dice gradient matches finite differences") {
    Rng rng(46);
    for (int trial = 0; trial < 20; ++trial) {
        Mask truth({9, 9});
        for (auto& v : truth.data) v = rng.uniform() < 0.4 ? 1 : 0;
        TensorD logits({9, 9});
        for (auto& v : logits.data) v = 2.0 * rng.normal();
        const auto lg = dice_loss_on_logits(logits, truth);
        const TensorD numeric =
            fd_gradient([&](const TensorD& x) { return dice_loss_on_logits(x, truth).value; }, logits);
        CHECK(grads_close(lg.grad, numeric, 1e-3, 1e-6, nullptr));
    }
}

TEST_CASE("mse examples and batch mean") {
    TensorD same({1, 1}, 0.7);
    CHECK(mse_loss(same, same).value == doctest::Approx(0.0));
    TensorD p({1, 1}, 0.9), t({1, 1}, 0.7);
    CHECK(mse_loss(p, t).value == doctest::Approx(0.04).epsilon(1e-12));

    Rng rng(47);
    TensorD preds({7, 1}), targets({7, 1});
    for (auto& v : preds.data) v = rng.uniform();
    for (auto& v : targets.data) v = rng.uniform();
    double want = 0.0;
    for (int i = 0; i < 7; ++i) {
        const double d = preds.data[static_cast<std::size_t>(i)] - targets.data[static_cast<std::size_t>(i)];
        want += d * d;
    }
    want /= 7.0;
    CHECK(mse_loss(preds, targets).value == doctest::Approx(want).epsilon(1e-12));
    CHECK_THROWS_AS(mse_loss(preds, TensorD({7, 1}, 1.5)), std::invalid_argument);
}

TEST_CASE("stop-gradient variant drops the weight-path term") {
    Rng rng(48);
    Mask lesion({5, 5}), silhouette({5, 5});
    lesion.at(2, 2) = 1;
    TensorD logits({5, 5});
    for (auto& v : logits.data) v = rng.normal();
    const auto full = mwce_loss(logits, lesion, silhouette, {2, 2}, MwceParams{}, true);
    const auto stopped = mwce_loss(logits, lesion, silhouette, {2, 2}, MwceParams{}, false);
    CHECK(full.value == doctest::Approx(stopped.value));  // same loss, different gradient
    bool any_diff = false;
    for (std::size_t i = 0; i < full.grad.data.size(); ++i)
        any_diff = any_diff || full.grad.data[i] != stopped.grad.data[i];
    CHECK(any_diff);
}
