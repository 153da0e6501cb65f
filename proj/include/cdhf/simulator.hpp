#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdhf/telemetry.hpp"

namespace cdhf {

class SimulatorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The eleven latent programmer activities whose per-state acceptance
// probabilities parameterize the behavior model.
enum class LatentState {
    ThinkingVerifyingSuggestion,
    PromptCrafting,
    LookingUpDocumentation,
    WritingNewFunctionality,
    ThinkingAboutNewCodeToWrite,
    EditingLastSuggestion,
    WaitingForSuggestion,
    EditingWrittenCode,
    WritingDocumentation,
    DebuggingTestingCode,
    DeferringThoughtForLater,
};
inline constexpr int kNumLatentStates = 11;

std::string to_string(LatentState s);
LatentState latent_state_from_string(const std::string& name);

// Positive time distribution; closed-form mean available for every family so
// Monte-Carlo estimates can be checked against exact expectations.
struct DistSpec {
    enum class Family { Point, LogNormal, Exponential };
    Family family = Family::Point;
    double mean_s = 0.0;       // expectation in seconds, all families
    double sigma_log = 0.0;    // log-space sd, LogNormal only

    double mean() const { return mean_s; }
    double sample(std::uint64_t seed, std::uint64_t counter) const;

    static DistSpec point(double mean) { return {Family::Point, mean, 0.0}; }
    static DistSpec lognormal(double mean, double sigma) {
        return {Family::LogNormal, mean, sigma};
    }
    static DistSpec exponential(double mean) { return {Family::Exponential, mean, 0.0}; }
};

struct ProgrammerProfile {
    // Row-stochastic transition matrix over latent states, first-order Markov
    // per shown event.
    std::array<std::array<double, kNumLatentStates>, kNumLatentStates> state_transition;
    std::array<double, kNumLatentStates> accept_prob_by_state;
    std::array<bool, kNumLatentStates> expects_suggestion_by_state;

    DistSpec verification_time;
    DistSpec editing_time_given_accept;
    DistSpec writing_time_given_reject;
    DistSpec writing_time_not_shown;
    DistSpec latency_tau;

    // Generative acceptance model: logit(p_true) = logit(state base rate)
    // + quality_weight * latent quality + length_weight * length z-score
    // + per-category offset. quality_weight = length_weight = 0 pins p_true
    // to the state base rate exactly.
    double quality_weight = 0.0;
    double length_weight = 0.0;
    double confidence_noise_sigma = 0.0;  // logit noise on reported confidence
    double comment_logit_offset = 0.0;
    double single_char_logit_offset = 0.0;
    double mid_word_logit_offset = 0.0;

    void validate() const;  // throws SimulatorError naming the violated constraint

    // Table defaults: uniform transitions, per-state acceptance probabilities,
    // log-normal time distributions, no generative perturbations.
    static ProgrammerProfile defaults();
    // Profile used by the default simulated cohort: sticky state dynamics and
    // nonzero quality/length weights so learned models have signal.
    static ProgrammerProfile default_cohort();
};

struct GroundTruthAnnotation {
    std::int64_t event_id = 0;
    std::string programmer_id;
    LatentState latent_state = LatentState::ThinkingVerifyingSuggestion;
    double true_accept_prob = 0.0;
    double true_pstar = 0.0;         // with latency iff the state expects a suggestion
    double true_delta_seconds = 0.0;
    bool expects_suggestion = false;
};

struct SimulationConfig {
    int n_programmers = 50;
    int sessions_per_programmer = 10;
    int events_per_session = 100;  // shown events per session
    std::uint64_t seed = 1;

    // Suggestion/prompt text generator.
    int vocabulary_size = 120;
    int prompt_tokens_min = 6;
    int prompt_tokens_max = 40;
    int suggestion_tokens_min = 1;
    int suggestion_tokens_max = 12;
    double comment_rate = 0.08;
    double single_char_rate = 0.10;
    double mid_word_rate = 0.12;
    double browse_rate = 0.005;

    void validate() const;
};

struct CohortResult {
    TelemetryStore store;
    std::vector<GroundTruthAnnotation> annotations;  // aligned 1:1 with Shown events
};

// Deterministic under (config, seed); parallelizes across programmers using
// independent substreams, so serial and parallel runs are bit-identical.
CohortResult simulate_cohort(const SimulationConfig& config, const ProgrammerProfile& profile);
// Heterogeneous cohort: programmer i uses profiles[i % profiles.size()].
CohortResult simulate_cohort(const SimulationConfig& config,
                             const std::vector<ProgrammerProfile>& profiles);

void write_annotations(const std::vector<GroundTruthAnnotation>& anns, const std::string& path);
std::vector<GroundTruthAnnotation> read_annotations(const std::string& path);

struct MonteCarloEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

// Samples total programmer time for one decision: shown (verification +
// accept/reject outcome time + latency when expecting) or not shown (writing
// only). Deterministic under seed; sampling is counter-based so the OpenMP
// and serial paths agree bitwise.
MonteCarloEstimate monte_carlo_time(const ProgrammerProfile& profile, double p_accept,
                                    bool expecting, bool show_decision,
                                    std::size_t n_samples, std::uint64_t seed);
// Serial reference for the parallel kernel above.
MonteCarloEstimate monte_carlo_time_serial(const ProgrammerProfile& profile, double p_accept,
                                           bool expecting, bool show_decision,
                                           std::size_t n_samples, std::uint64_t seed);

// Closed-form suggestion utility for a profile's expected times.
double closed_form_delta(const ProgrammerProfile& profile, double p_accept, bool expecting);
double closed_form_pstar(const ProgrammerProfile& profile, bool expecting);

struct Proposition1Row {
    double p = 0.0;
    double delta_closed_form = 0.0;
    double delta_monte_carlo = 0.0;
    double combined_stderr = 0.0;
    bool agreement = false;  // MC within 3 SE and sign matches sign(p - P*)
};

struct Proposition1Report {
    double pstar = 0.0;
    std::vector<Proposition1Row> rows;
    bool all_agree = false;
};

// Validates Appendix-style assumptions (two actions; writing-on-reject
// exceeds editing-on-accept; writing unchanged by hidden suggestions), then
// checks sign(delta) == sign(p - P*) and Monte-Carlo concordance per grid
// point.
Proposition1Report verify_proposition1(const ProgrammerProfile& profile,
                                       const std::vector<double>& accept_prob_grid,
                                       std::size_t n_samples, std::uint64_t seed);

}  // namespace cdhf
