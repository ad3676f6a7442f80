#include <doctest.h>

#include <cmath>

#include "stenonet/losses.hpp"
#include "stenonet/metrics.hpp"

using namespace stenonet;

namespace {

// Pairwise brute force with ties credited one half.
double auroc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
    double credit = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) credit += 1.0;
            else if (scores[i] == scores[j]) credit += 0.5;
        }
    }
    return credit / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("auroc examples") {
    CHECK(auroc({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}).value == doctest::Approx(1.0));
    CHECK(auroc({0.9, 0.8, 0.3, 0.1}, {1, 0, 1, 0}).value == doctest::Approx(0.75));
    CHECK(auroc({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}).value == doctest::Approx(0.5));
    CHECK_FALSE(auroc({0.2, 0.4}, {1, 1}).defined);
}

TEST_CASE("auroc matches pairwise brute force on random sets up to size 200") {
    Rng rng(51);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = rng.uniform_int(2, 200);
        std::vector<double> scores;
        std::vector<int> labels;
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            // quantized scores produce plenty of ties
            scores.push_back(rng.uniform_int(0, 20) / 20.0);
            labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
            pos += labels.back();
        }
        if (pos == 0 || pos == n) {
            CHECK_FALSE(auroc(scores, labels).defined);
            continue;
        }
        const AurocResult got = auroc(scores, labels);
        REQUIRE(got.defined);
        CHECK(got.value == doctest::Approx(auroc_oracle(scores, labels)).epsilon(1e-12));
    }
}

TEST_CASE("auroc is invariant under strictly increasing score transforms") {
    Rng rng(52);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 80; ++i) {
        scores.push_back(rng.uniform());
        labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    std::vector<double> warped;
    for (double s : scores) warped.push_back(std::exp(3.0 * s) + 7.0);
    CHECK(auroc(scores, labels).value == doctest::Approx(auroc(warped, labels).value).epsilon(1e-12));
}

TEST_CASE("dice coefficient examples and loss cross-check") {
    Mask truth({6, 6});
    for (int i = 0; i < 3; ++i) truth.at(i, 0) = 1;
    TensorF perfect({6, 6});
    for (int i = 0; i < 3; ++i) perfect.at(i, 0) = 1.0f;
    CHECK(dice_coefficient(perfect, truth) == doctest::Approx(1.0));

    TensorF disjoint({6, 6});
    disjoint.at(5, 5) = 1.0f;
    CHECK(dice_coefficient(disjoint, truth) == doctest::Approx(0.0));

    // both empty counts as 1
    CHECK(dice_coefficient(TensorF({4, 4}), Mask({4, 4})) == doctest::Approx(1.0));

    Rng rng(53);
    for (int trial = 0; trial < 20; ++trial) {
        TensorF pred({8, 8});
        Mask t2({8, 8});
        for (auto& v : pred.data) v = rng.uniform() < 0.4 ? 1.0f : 0.0f;
        for (auto& v : t2.data) v = rng.uniform() < 0.4 ? 1 : 0;
        const double coeff = dice_coefficient(pred, t2);
        const double neg_loss = -dice_loss(pred.cast<double>(), t2).value;
        CHECK(coeff == doctest::Approx(neg_loss).epsilon(1e-5));
    }
}

TEST_CASE("dice coefficient is symmetric for binary inputs") {
    Rng rng(54);
    for (int trial = 0; trial < 20; ++trial) {
        Mask a({7, 7}), b({7, 7});
        for (auto& v : a.data) v = rng.uniform() < 0.5 ? 1 : 0;
        for (auto& v : b.data) v = rng.uniform() < 0.5 ? 1 : 0;
        TensorF af = a.cast<float>(), bf = b.cast<float>();
        CHECK(dice_coefficient(af, b) == doctest::Approx(dice_coefficient(bf, a)));
    }
}

TEST_CASE("localization accuracy counts half-open containment") {
    const BBox box{96, 96, 192};
    CHECK(localization_accuracy({box}, {{150, 150}}) == doctest::Approx(1.0));
    CHECK(localization_accuracy({box}, {{288, 150}}) == doctest::Approx(0.0));  // boundary excluded
    CHECK_THROWS_AS(localization_accuracy({}, {}), std::invalid_argument);

    Rng rng(55);
    std::vector<BBox> boxes;
    std::vector<PixelPoint> points;
    int hits = 0;
    for (int i = 0; i < 200; ++i) {
        BBox b{rng.uniform_int(0, 100), rng.uniform_int(0, 100), rng.uniform_int(10, 60)};
        PixelPoint p{rng.uniform_int(0, 160), rng.uniform_int(0, 160)};
        hits += (p.row >= b.row && p.row < b.row + b.size && p.col >= b.col && p.col < b.col + b.size) ? 1 : 0;
        boxes.push_back(b);
        points.push_back(p);
    }
    CHECK(localization_accuracy(boxes, points) == doctest::Approx(hits / 200.0));
}

TEST_CASE("localization accuracy is invariant under joint translation") {
    Rng rng(56);
    std::vector<BBox> boxes, shifted_boxes;
    std::vector<PixelPoint> points, shifted_points;
    for (int i = 0; i < 50; ++i) {
        BBox b{rng.uniform_int(0, 50), rng.uniform_int(0, 50), 32};
        PixelPoint p{rng.uniform_int(0, 90), rng.uniform_int(0, 90)};
        boxes.push_back(b);
        points.push_back(p);
        shifted_boxes.push_back(BBox{b.row + 13, b.col + 7, b.size});
        shifted_points.push_back(PixelPoint{p.row + 13, p.col + 7});
    }
    CHECK(localization_accuracy(boxes, points) ==
          doctest::Approx(localization_accuracy(shifted_boxes, shifted_points)));
}

TEST_CASE("false discovery rate at the 70% threshold") {
    // TP = 2, FP = 1 -> 1/3
    CHECK(fdr_at_threshold({0.8, 0.9, 0.75}, {0.8, 0.95, 0.3}).value == doctest::Approx(1.0 / 3.0));
    CHECK(fdr_at_threshold({0.8, 0.2}, {0.9, 0.1}).value == doctest::Approx(0.0));
    const FdrResult none = fdr_at_threshold({0.1, 0.2}, {0.9, 0.95});
    CHECK(none.no_positives);
    CHECK(none.value == doctest::Approx(0.0));
    // exactly 70% counts as positive
    const ConfusionCounts c = confusion_at_threshold({0.7}, {0.7}, 0.7);
    CHECK(c.tp == 1);
}

TEST_CASE("fdr plus precision is one whenever positives are predicted") {
    Rng rng(57);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> preds, truths;
        for (int i = 0; i < 40; ++i) {
            preds.push_back(rng.uniform());
            truths.push_back(rng.uniform());
        }
        const ConfusionCounts c = confusion_at_threshold(preds, truths, 0.7);
        if (c.tp + c.fp == 0) continue;
        const double precision = static_cast<double>(c.tp) / (c.tp + c.fp);
        CHECK(fdr_at_threshold(preds, truths).value + precision == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("assessment bias is prediction minus truth, canceling errors allowed") {
    const BiasResult r = assessment_bias({80, 60}, {70, 70});
    CHECK(r.mean == doctest::Approx(0.0));
    const BiasResult zero = assessment_bias({70, 55, 30}, {70, 55, 30});
    CHECK(zero.mean == doctest::Approx(0.0));
    CHECK(zero.stddev == doctest::Approx(0.0));
    // positive bias = overestimation
    CHECK(assessment_bias({80}, {70}).mean == doctest::Approx(10.0));
}

TEST_CASE("aggregate over runs: mean and n-1 standard deviation") {
    RunMetrics a, b;
    a.auroc = 0.5;
    b.auroc = 0.7;
    const AggregateReport r = aggregate_runs({a, b});
    CHECK(r.metrics.at("auroc").mean == doctest::Approx(0.6));
    CHECK(r.metrics.at("auroc").stddev == doctest::Approx(std::sqrt(0.02)).epsilon(1e-9));
    CHECK(r.metrics.at("auroc").stddev == doctest::Approx(0.1414).epsilon(1e-3));

    const AggregateReport same = aggregate_runs({a, a, a});
    CHECK(same.metrics.at("auroc").stddev == doctest::Approx(0.0));

    const AggregateReport single = aggregate_runs({a});
    CHECK_FALSE(single.metrics.at("auroc").has_std);

    Rng rng(58);
    std::vector<RunMetrics> runs;
    for (int i = 0; i < 5; ++i) {
        RunMetrics m;
        m.dice = rng.uniform();
        runs.push_back(m);
    }
    double mean = 0.0;
    for (const auto& m : runs) mean += m.dice;
    mean /= 5.0;
    double ss = 0.0;
    for (const auto& m : runs) ss += (m.dice - mean) * (m.dice - mean);
    const double std5 = std::sqrt(ss / 4.0);
    const AggregateReport five = aggregate_runs(runs);
    CHECK(five.metrics.at("dice").mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(five.metrics.at("dice").stddev == doctest::Approx(std5).epsilon(1e-12));
}

TEST_CASE("evaluation report carries per-seed rows, aggregates and labeled PVA references") {
    RunMetrics a, b;
    a.auroc = 0.8;
    a.seed = 0;
    b.auroc = 0.9;
    b.seed = 1;
    const std::string report = render_eval_report({a, b}, aggregate_runs({a, b}));
    CHECK(report.find("per_seed") != std::string::npos);
    CHECK(report.find("aggregate") != std::string::npos);
    CHECK(report.find("0.506") != std::string::npos);
    CHECK(report.find("16.0") != std::string::npos);
    CHECK(report.find("11.5") != std::string::npos);
    CHECK(report.find("not measured") != std::string::npos);
}
