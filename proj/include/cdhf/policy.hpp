#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdhf/models.hpp"
#include "cdhf/telemetry.hpp"

namespace cdhf {

class PolicyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Expected durations (seconds) of the programmer-time components. The
// constructor-style check enforces that writing after a reject costs more
// than editing after an accept.
struct UtilityParameters {
    double expected_verification_s = 0.0;
    double expected_editing_given_accept_s = 0.0;
    double expected_writing_given_reject_s = 0.0;
    double expected_writing_not_shown_s = 0.0;
    double expected_latency_s = 0.0;

    void validate() const {
        if (expected_verification_s < 0 || expected_editing_given_accept_s < 0 ||
            expected_writing_given_reject_s < 0 || expected_writing_not_shown_s < 0 ||
            expected_latency_s < 0)
            throw PolicyError("utility parameters must be non-negative");
        if (expected_writing_given_reject_s <= expected_editing_given_accept_s)
            throw PolicyError(
                "assumption 2 violated: E[writing|reject] must exceed E[editing|accept]");
    }
};

struct PolicyThresholds {
    double v1 = 0.0;
    double v2 = 0.0;

    void validate() const {
        if (v1 < 0 || v1 > 1 || v2 < 0 || v2 > 1)
            throw PolicyError("thresholds must lie in [0,1]");
    }
};

enum class DisplayOutcome { HiddenStage1, HiddenStage2, Shown };

struct DisplayDecision {
    DisplayOutcome outcome = DisplayOutcome::Shown;
    double stage1_prob = 0.0;
    std::optional<double> stage2_prob;  // absent iff HiddenStage1
};

// verification + p * editing + (1-p) * writing-after-reject; latency is the
// caller's concern (see suggestion_utility).
double expected_time_shown(const UtilityParameters& params, double p_accept);

// delta = writing-not-shown - expected_time_shown - (latency when the
// programmer is expecting a suggestion). Show iff delta > 0.
double suggestion_utility(const UtilityParameters& params, double p_accept,
                          bool programmer_expecting);

struct PStarResult {
    double value = 0.0;
    bool out_of_range = false;  // value > 1: no probability can justify showing
};

// (verification + latency) / (writing|reject - editing|accept). Unless
// allow_unequal_writing is set, requires the equal-writing assumption within
// 1e-9.
PStarResult pstar(const UtilityParameters& params, bool allow_unequal_writing = false);

// Produces the suggestion event (with suggestion text and confidence) only
// when stage 1 passes; stands in for the LLM call.
using SuggestionProvider = std::function<TelemetryEvent()>;

DisplayDecision decide(const AcceptanceModel& stage1_model,
                       const AcceptanceModel& stage2_model,
                       const PolicyThresholds& thresholds,
                       const TelemetryEvent& prompt_event,
                       std::span<const TelemetryEvent> context,
                       const SuggestionProvider& provider);

// Index of the candidate with the lowest expected shown-time (equivalently,
// highest acceptance probability); ties break to the earliest index.
std::size_t rank_suggestions(std::span<const double> candidate_accept_probs,
                             const UtilityParameters& params);

// Exact per-grid-point counting for the two-stage rule over a fixed
// evaluation set. Shared by threshold selection, the sweep and the
// retrospective replay so they agree exactly.
class TwoStageCounts {
public:
    TwoStageCounts(std::span<const double> stage1_scores,
                   std::span<const double> stage2_scores, std::span<const int> labels,
                   int grid_steps = 100);

    int grid_steps() const { return grid_steps_; }
    double grid_value(int k) const { return static_cast<double>(k) / grid_steps_; }
    std::size_t total() const { return n_; }

    struct Cell {
        std::size_t stage1_hidden = 0;
        std::size_t stage1_hidden_rejected = 0;
        std::size_t stage2_hidden = 0;
        std::size_t stage2_hidden_rejected = 0;
        std::size_t shown_accepted = 0;

        std::size_t hidden() const { return stage1_hidden + stage2_hidden; }
        std::size_t hidden_rejected() const {
            return stage1_hidden_rejected + stage2_hidden_rejected;
        }
    };
    // Counts for thresholds (v1, v2) = (k1, k2) / grid_steps.
    Cell at(int k1, int k2) const;

private:
    int grid_steps_;
    std::size_t n_;
    // (bin1, bin2) histograms with 2-D prefix sums; bin(s) = ceil(s * steps).
    std::vector<std::size_t> count_, rejected_;
    std::size_t idx(int b1, int b2) const {
        return static_cast<std::size_t>(b1) * static_cast<std::size_t>(grid_steps_ + 2) +
               static_cast<std::size_t>(b2);
    }
};

struct ThresholdSelection {
    PolicyThresholds thresholds;
    bool feasible = false;
    double hidden_fraction = 0.0;
    double stage1_hidden_fraction = 0.0;
    double stage1_precision = 1.0;  // rejected fraction among stage-1 hidden
    double stage2_precision = 1.0;
    double overall_precision = 1.0;
};

// Grid search maximizing hidden fraction subject to per-stage hidden-rejected
// precision >= target. Returns (0,0) with feasible=false when no pair hides
// anything within the constraint.
ThresholdSelection select_thresholds(std::span<const double> stage1_scores,
                                     std::span<const double> stage2_scores,
                                     std::span<const int> labels,
                                     double target_hidden_precision,
                                     int grid_steps = 100);

}  // namespace cdhf
