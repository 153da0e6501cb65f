#include "cdhf/policy.hpp"

#include <algorithm>
#include <cmath>

#include "cdhf/features.hpp"

namespace cdhf {

double expected_time_shown(const UtilityParameters& params, double p_accept) {
    if (p_accept < 0.0 || p_accept > 1.0)
        throw PolicyError("acceptance probability outside [0,1]");
    return params.expected_verification_s +
           p_accept * params.expected_editing_given_accept_s +
           (1.0 - p_accept) * params.expected_writing_given_reject_s;
}

double suggestion_utility(const UtilityParameters& params, double p_accept,
                          bool programmer_expecting) {
    double latency = programmer_expecting ? params.expected_latency_s : 0.0;
    return params.expected_writing_not_shown_s - expected_time_shown(params, p_accept) -
           latency;
}

PStarResult pstar(const UtilityParameters& params, bool allow_unequal_writing) {
    double denom =
        params.expected_writing_given_reject_s - params.expected_editing_given_accept_s;
    if (denom <= 0.0)
        throw PolicyError(
            "assumption 2 violated: E[writing|reject] must exceed E[editing|accept]");
    if (!allow_unequal_writing &&
        std::abs(params.expected_writing_given_reject_s -
                 params.expected_writing_not_shown_s) > 1e-9)
        throw PolicyError(
            "assumption 3 violated: E[writing|reject] must equal E[writing, not shown]; "
            "pass allow_unequal_writing to acknowledge the approximation");
    PStarResult r;
    r.value = (params.expected_verification_s + params.expected_latency_s) / denom;
    r.out_of_range = r.value > 1.0;
    return r;
}

DisplayDecision decide(const AcceptanceModel& stage1_model,
                       const AcceptanceModel& stage2_model,
                       const PolicyThresholds& thresholds,
                       const TelemetryEvent& prompt_event,
                       std::span<const TelemetryEvent> context,
                       const SuggestionProvider& provider) {
    thresholds.validate();
    DisplayDecision d;
    FeatureVector v1 = extract(prompt_event, context, stage1_model.schema());
    d.stage1_prob = stage1_model.predict_proba(v1);
    if (d.stage1_prob <= thresholds.v1) {
        d.outcome = DisplayOutcome::HiddenStage1;
        return d;  // the provider is never invoked for a stage-1 hide
    }
    TelemetryEvent with_suggestion = provider();
    FeatureVector v2 = extract(with_suggestion, context, stage2_model.schema());
    d.stage2_prob = stage2_model.predict_proba(v2);
    d.outcome = *d.stage2_prob <= thresholds.v2 ? DisplayOutcome::HiddenStage2
                                                : DisplayOutcome::Shown;
    return d;
}

std::size_t rank_suggestions(std::span<const double> candidate_accept_probs,
                             const UtilityParameters& params) {
    if (candidate_accept_probs.empty()) throw PolicyError("no candidates to rank");
    params.validate();
    std::size_t best = 0;
    double best_time = expected_time_shown(params, candidate_accept_probs[0]);
    for (std::size_t i = 1; i < candidate_accept_probs.size(); ++i) {
        double t = expected_time_shown(params, candidate_accept_probs[i]);
        if (t < best_time) {  // strict: ties keep the earliest index
            best_time = t;
            best = i;
        }
    }
    return best;
}

TwoStageCounts::TwoStageCounts(std::span<const double> stage1_scores,
                               std::span<const double> stage2_scores,
                               std::span<const int> labels, int grid_steps)
    : grid_steps_(grid_steps), n_(labels.size()) {
    if (stage1_scores.size() != n_ || stage2_scores.size() != n_)
        throw PolicyError("misaligned score/label arrays");
    if (grid_steps < 1) throw PolicyError("grid_steps must be >= 1");

    const int bins = grid_steps + 2;  // bin values 0..steps, plus guard row/col
    count_.assign(static_cast<std::size_t>(bins) * static_cast<std::size_t>(bins), 0);
    rejected_.assign(count_.size(), 0);
    auto bin_of = [&](double s) {
        if (s < 0.0 || s > 1.0) throw PolicyError("score outside [0,1]");
        return std::min(grid_steps,
                        static_cast<int>(std::ceil(s * grid_steps - 1e-12)));
    };
    for (std::size_t i = 0; i < n_; ++i) {
        int b1 = bin_of(stage1_scores[i]) + 1;  // shift for prefix-sum guard
        int b2 = bin_of(stage2_scores[i]) + 1;
        ++count_[idx(b1, b2)];
        if (!labels[i]) ++rejected_[idx(b1, b2)];
    }
    for (int a = 1; a < bins; ++a)
        for (int b = 1; b < bins; ++b) {
            count_[idx(a, b)] += count_[idx(a - 1, b)] + count_[idx(a, b - 1)] -
                                 count_[idx(a - 1, b - 1)];
            rejected_[idx(a, b)] += rejected_[idx(a - 1, b)] + rejected_[idx(a, b - 1)] -
                                    rejected_[idx(a - 1, b - 1)];
        }
}

TwoStageCounts::Cell TwoStageCounts::at(int k1, int k2) const {
    if (k1 < 0 || k1 > grid_steps_ || k2 < 0 || k2 > grid_steps_)
        throw PolicyError("grid index out of range");
    const int top = grid_steps_ + 1;  // full range in prefix coordinates
    auto rect = [&](const std::vector<std::size_t>& ps, int a, int b) {
        return ps[idx(a, b)];
    };
    Cell c;
    // Stage-1 hidden: s1 <= v1   <=>  bin1 <= k1.
    c.stage1_hidden = rect(count_, k1 + 1, top);
    c.stage1_hidden_rejected = rect(rejected_, k1 + 1, top);
    // Stage-2 hidden: s1 > v1 and s2 <= v2.
    c.stage2_hidden = rect(count_, top, k2 + 1) - rect(count_, k1 + 1, k2 + 1);
    c.stage2_hidden_rejected =
        rect(rejected_, top, k2 + 1) - rect(rejected_, k1 + 1, k2 + 1);

    std::size_t shown = n_ - c.hidden();
    std::size_t total_rejected = rect(rejected_, top, top);
    std::size_t shown_rejected = total_rejected - c.hidden_rejected();
    c.shown_accepted = shown - shown_rejected;
    return c;
}

ThresholdSelection select_thresholds(std::span<const double> stage1_scores,
                                     std::span<const double> stage2_scores,
                                     std::span<const int> labels,
                                     double target_hidden_precision, int grid_steps) {
    if (target_hidden_precision <= 0.5 || target_hidden_precision > 1.0)
        throw PolicyError("target hidden precision must lie in (0.5, 1]");
    TwoStageCounts counts(stage1_scores, stage2_scores, labels, grid_steps);
    const double n = static_cast<double>(counts.total());

    ThresholdSelection best;
    best.thresholds = {0.0, 0.0};
    for (int k1 = 0; k1 <= grid_steps; ++k1) {
        for (int k2 = 0; k2 <= grid_steps; ++k2) {
            auto c = counts.at(k1, k2);
            if (c.hidden() == 0) continue;
            double p1 = c.stage1_hidden == 0
                            ? 1.0
                            : static_cast<double>(c.stage1_hidden_rejected) /
                                  static_cast<double>(c.stage1_hidden);
            double p2 = c.stage2_hidden == 0
                            ? 1.0
                            : static_cast<double>(c.stage2_hidden_rejected) /
                                  static_cast<double>(c.stage2_hidden);
            if (p1 < target_hidden_precision || p2 < target_hidden_precision) continue;

            double hidden_fraction = static_cast<double>(c.hidden()) / n;
            double s1_fraction = static_cast<double>(c.stage1_hidden) / n;
            bool better = false;
            if (!best.feasible) better = true;
            else if (hidden_fraction > best.hidden_fraction) better = true;
            else if (hidden_fraction == best.hidden_fraction &&
                     s1_fraction > best.stage1_hidden_fraction)
                better = true;
            if (!better) continue;

            best.feasible = true;
            best.thresholds = {counts.grid_value(k1), counts.grid_value(k2)};
            best.hidden_fraction = hidden_fraction;
            best.stage1_hidden_fraction = s1_fraction;
            best.stage1_precision = p1;
            best.stage2_precision = p2;
            best.overall_precision =
                static_cast<double>(c.hidden_rejected()) / static_cast<double>(c.hidden());
        }
    }
    return best;
}

}  // namespace cdhf
