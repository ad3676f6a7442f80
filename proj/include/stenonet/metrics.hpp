#pragma once

#include <map>
#include <string>
#include <vector>

#include "stenonet/geometry.hpp"
#include "stenonet/tensor.hpp"

namespace stenonet {

struct ConfusionCounts {
    int tp = 0, fp = 0, tn = 0, fn = 0;
    int total() const { return tp + fp + tn + fn; }
};

struct AurocResult {
    double value = 0.0;
    bool defined = false;  // false when labels are single-class
};

struct FdrResult {
    double value = 0.0;
    bool no_positives = false;  // nothing predicted positive; value reported as 0
};

struct BiasResult {
    double mean = 0.0;
    double stddev = 0.0;
};

struct RunMetrics {
    double localization_accuracy = 0.0;
    double dice = 0.0;
    double auroc = 0.0;
    double fdr = 0.0;
    double assessment_bias = 0.0;
    std::uint64_t seed = 0;
};

struct AggregateStat {
    double mean = 0.0;
    double stddev = 0.0;
    bool has_std = false;  // requires >= 2 runs
};

struct AggregateReport {
    std::map<std::string, AggregateStat> metrics;
    int run_count = 0;
};

/// Fraction of pairs whose half-open box extent contains the point.
double localization_accuracy(const std::vector<BBox>& boxes, const std::vector<PixelPoint>& points);

/// Overlap of the thresholded prediction with the truth, 2|P&T|/(|P|+|T|);
/// defined as 1 when both are empty.
double dice_coefficient(const TensorF& pred, const Mask& truth, double threshold = 0.5);

/// Rank-based (Mann-Whitney) area under the ROC curve; ties credited 0.5.
AurocResult auroc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Counts with ">= threshold" as the positive call on both sides.
ConfusionCounts confusion_at_threshold(const std::vector<double>& preds, const std::vector<double>& truths,
                                       double threshold);

/// False discovery rate FP/(FP+TP) at the stenosis-fraction threshold
/// (default 0.7).
FdrResult fdr_at_threshold(const std::vector<double>& preds, const std::vector<double>& truths,
                           double threshold = 0.7);

/// Mean and standard deviation of (prediction - truth) in percentage
/// points; positive means overestimation.
BiasResult assessment_bias(const std::vector<double>& preds_pct, const std::vector<double>& truths_pct);

/// Per-metric sample mean and n-1 standard deviation across runs.
AggregateReport aggregate_runs(const std::vector<RunMetrics>& runs);

/// Published reference values for physician visual assessment, included in
/// evaluation reports for context. These are externally reported constants,
/// never outputs of this artifact.
struct PvaReference {
    double false_discovery_rate = 0.506;
    double assessment_bias_mean_pct = 16.0;
    double assessment_bias_std_pct = 11.5;
};

/// Serializes per-seed metrics, their aggregate, and the labeled PVA
/// reference constants as a JSON report.
std::string render_eval_report(const std::vector<RunMetrics>& runs, const AggregateReport& aggregate);

}  // namespace stenonet
