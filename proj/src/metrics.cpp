#include "stenonet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace stenonet {

double localization_accuracy(const std::vector<BBox>& boxes, const std::vector<PixelPoint>& points) {
    if (boxes.empty()) throw std::invalid_argument("localization_accuracy: empty input");
    if (boxes.size() != points.size())
        throw std::invalid_argument("localization_accuracy: boxes and points disagree in length");
    int hits = 0;
    for (std::size_t i = 0; i < boxes.size(); ++i)
        if (boxes[i].contains(points[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(boxes.size());
}

double dice_coefficient(const TensorF& pred, const Mask& truth, double threshold) {
    if (pred.shape != truth.shape) throw std::invalid_argument("dice_coefficient: shape mismatch");
    std::int64_t inter = 0, p = 0, t = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool pi = pred.data[i] >= threshold;
        const bool ti = truth.data[i] != 0;
        p += pi;
        t += ti;
        inter += pi && ti;
    }
    if (p + t == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p + t);
}

AurocResult auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: scores/labels length mismatch");
    const std::size_t n = scores.size();
    std::int64_t n_pos = 0;
    for (int l : labels) n_pos += l ? 1 : 0;
    const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) return {0.0, false};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups, 1-based
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    double rank_sum_pos = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (labels[k]) rank_sum_pos += rank[k];
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return {u / (static_cast<double>(n_pos) * static_cast<double>(n_neg)), true};
}

ConfusionCounts confusion_at_threshold(const std::vector<double>& preds, const std::vector<double>& truths,
                                       double threshold) {
    if (preds.size() != truths.size()) throw std::invalid_argument("confusion: length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] >= threshold;
        const bool t = truths[i] >= threshold;
        if (p && t) c.tp++;
        else if (p && !t) c.fp++;
        else if (!p && t) c.fn++;
        else c.tn++;
    }
    return c;
}

FdrResult fdr_at_threshold(const std::vector<double>& preds, const std::vector<double>& truths,
                           double threshold) {
    ConfusionCounts c = confusion_at_threshold(preds, truths, threshold);
    if (c.tp + c.fp == 0) return {0.0, true};
    return {static_cast<double>(c.fp) / static_cast<double>(c.tp + c.fp), false};
}

BiasResult assessment_bias(const std::vector<double>& preds_pct, const std::vector<double>& truths_pct) {
    if (preds_pct.size() != truths_pct.size()) throw std::invalid_argument("assessment_bias: length mismatch");
    if (preds_pct.empty()) throw std::invalid_argument("assessment_bias: empty input");
    const std::size_t n = preds_pct.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += preds_pct[i] - truths_pct[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = preds_pct[i] - truths_pct[i] - mean;
        ss += d * d;
    }
    const double stddev = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    return {mean, stddev};
}

namespace {

AggregateStat stat_of(const std::vector<double>& xs) {
    AggregateStat s;
    const std::size_t n = xs.size();
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(n);
    if (n >= 2) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(n - 1));
        s.has_std = true;
    }
    return s;
}

}  // namespace

AggregateReport aggregate_runs(const std::vector<RunMetrics>& runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate_runs: no runs");
    auto collect = [&](auto field) {
        std::vector<double> xs;
        for (const auto& r : runs) xs.push_back(r.*field);
        return stat_of(xs);
    };
    AggregateReport report;
    report.run_count = static_cast<int>(runs.size());
    report.metrics["localization_accuracy"] = collect(&RunMetrics::localization_accuracy);
    report.metrics["dice"] = collect(&RunMetrics::dice);
    report.metrics["auroc"] = collect(&RunMetrics::auroc);
    report.metrics["fdr"] = collect(&RunMetrics::fdr);
    report.metrics["assessment_bias"] = collect(&RunMetrics::assessment_bias);
    return report;
}

std::string render_eval_report(const std::vector<RunMetrics>& runs, const AggregateReport& aggregate) {
    nlohmann::json j;
    j["run_count"] = aggregate.run_count;
    j["per_seed"] = nlohmann::json::array();
    for (const auto& r : runs)
        j["per_seed"].push_back({{"seed", r.seed},
                                 {"localization_accuracy", r.localization_accuracy},
                                 {"dice", r.dice},
                                 {"auroc", r.auroc},
                                 {"fdr", r.fdr},
                                 {"assessment_bias", r.assessment_bias}});
    for (const auto& [name, s] : aggregate.metrics) {
        j["aggregate"][name]["mean"] = s.mean;
        if (s.has_std) j["aggregate"][name]["std"] = s.stddev;
    }
    PvaReference pva;
    j["pva_reference"] = {
        {"false_discovery_rate", pva.false_discovery_rate},
        {"assessment_bias_mean_pct", pva.assessment_bias_mean_pct},
        {"assessment_bias_std_pct", pva.assessment_bias_std_pct},
        {"provenance", "published physician-visual-assessment reference values; not measured by this run"},
    };
    return j.dump(2);
}

}  // namespace stenonet
