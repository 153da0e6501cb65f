#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdhf/features.hpp"
#include "cdhf/models.hpp"
#include "cdhf/policy.hpp"
#include "cdhf/telemetry.hpp"

namespace cdhf {

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SplitMode { ByProgrammer, BySession };

struct SplitSpec {
    SplitMode mode = SplitMode::ByProgrammer;
    double train_ratio = 0.70;
    double val_ratio = 0.10;
    double test_ratio = 0.20;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitResult {
    TelemetryStore train, val, test;
};

// Exact partition of programmers (or sessions) with largest-remainder
// rounding; deterministic under seed.
SplitResult split_dataset(const TelemetryStore& store, const SplitSpec& spec);

struct SelectivePoint {
    int coverage_pct = 0;
    double accuracy = 0.0;
};

// Accuracy of the thresholded prediction on the x% most confident events,
// confidence = max(p, 1-p); the 100% point equals overall accuracy.
std::vector<SelectivePoint> selective_prediction_curve(std::span<const double> scores,
                                                       std::span<const int> labels);

struct TradeoffPoint {
    double v1 = 0.0, v2 = 0.0;
    double hidden_fraction = 0.0;
    double hidden_rejected_precision = 1.0;  // 1.0 when nothing is hidden
    double stage1_hidden_fraction = 0.0;
    double shown_acceptance_rate = 0.0;
};

struct TradeoffCurve {
    std::vector<TradeoffPoint> points;  // row-major over the (v1, v2) grid
    int grid_steps = 100;
};

// Full grid over (v1, v2); grid points are independent, computed from shared
// prefix-sum counts (TwoStageCounts) so the result is order-independent.
TradeoffCurve sweep_thresholds(std::span<const double> stage1_scores,
                               std::span<const double> stage2_scores,
                               std::span<const int> labels, int grid_steps = 100);

struct OperatingPoint {
    std::size_t n_events = 0;
    double hidden_fraction = 0.0;
    double stage1_hidden_fraction = 0.0;
    double stage1_precision = 1.0;
    double stage2_precision = 1.0;
    double overall_precision = 1.0;
    double shown_acceptance_rate = 0.0;
    std::size_t provider_calls = 0;
    double provider_call_savings = 0.0;  // fraction of events never sent to the provider
};

// Replays every labeled Shown event of the test store through decide().
// Errors when either model's training-dataset checksum matches the replay
// dataset (partition overlap).
OperatingPoint retrospective_policy_eval(const PolicyThresholds& thresholds,
                                         const TelemetryStore& test_store,
                                         const AcceptanceModel& stage1_model,
                                         const AcceptanceModel& stage2_model);

struct SampleComplexityPoint {
    double fraction = 0.0;
    double auroc = 0.0;
    bool skipped = false;  // too few rows of one class at this fraction
};

std::vector<SampleComplexityPoint> sample_complexity_curve(
    const std::vector<double>& fractions, const TrainingDataset& train,
    const TrainingDataset& eval_set, const FeatureSchema& schema,
    const TreeEnsembleParams& params, std::uint64_t seed);

struct RegressionFeasibility {
    double r2_model = 0.0;
    double r2_median_baseline = 0.0;
    std::size_t n_rows = 0;
};

// Regresses the next-event gap (verification-time proxy) on stage-2 features
// with a squared-loss tree ensemble; held-out R^2 against the training-mean
// predictor, plus the median-predictor baseline.
RegressionFeasibility verification_time_regression(const TelemetryStore& store,
                                                   std::uint64_t seed,
                                                   const TreeEnsembleParams& params = {
                                                       .n_trees = 100,
                                                       .objective = TreeObjective::Squared});

std::string tradeoff_csv(const TradeoffCurve& curve);
std::string selective_csv(const std::vector<SelectivePoint>& curve);
std::string sample_complexity_csv(const std::vector<SampleComplexityPoint>& curve);
std::string operating_point_csv(const OperatingPoint& op);
std::string operating_point_text(const OperatingPoint& op);

// Writes an artifact under dir and records (name, checksum) for the manifest.
class ReportWriter {
public:
    explicit ReportWriter(std::string dir);
    void write(const std::string& name, const std::string& content);
    // Emits manifest.txt listing every artifact with its checksum.
    void finalize();

private:
    std::string dir_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace cdhf
