#include "cdhf/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdhf/rng.hpp"
#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cdhf {

using nlohmann::json;

namespace {

constexpr const char* kStateNames[kNumLatentStates] = {
    "Thinking/Verifying Suggestion",
    "Prompt Crafting",
    "Looking up Documentation",
    "Writing New Functionality",
    "Thinking About New Code To Write",
    "Editing Last Suggestion",
    "Waiting For Suggestion",
    "Editing Written Code",
    "Writing Documentation",
    "Debugging/Testing Code",
    "Deferring Thought For Later",
};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logit(double p) {
    p = std::min(1.0 - 1e-9, std::max(1e-9, p));
    return std::log(p / (1.0 - p));
}

}  // namespace

std::string to_string(LatentState s) { return kStateNames[static_cast<int>(s)]; }

LatentState latent_state_from_string(const std::string& name) {
    for (int i = 0; i < kNumLatentStates; ++i)
        if (name == kStateNames[i]) return static_cast<LatentState>(i);
    throw SimulatorError("unknown latent state: " + name);
}

double DistSpec::sample(std::uint64_t seed, std::uint64_t counter) const {
    switch (family) {
        case Family::Point:
            return mean_s;
        case Family::LogNormal: {
            double mu = std::log(std::max(mean_s, 1e-12)) - 0.5 * sigma_log * sigma_log;
            return std::exp(mu + sigma_log * rng::normal(seed, counter));
        }
        case Family::Exponential: {
            double u = rng::uniform01(seed, counter);
            return -mean_s * std::log(1.0 - u);
        }
    }
    return mean_s;
}

void ProgrammerProfile::validate() const {
    for (int i = 0; i < kNumLatentStates; ++i) {
        double row = 0.0;
        for (int j = 0; j < kNumLatentStates; ++j) {
            double p = state_transition[i][j];
            if (p < 0.0 || p > 1.0)
                throw SimulatorError("transition probability outside [0,1]");
            row += p;
        }
        if (std::abs(row - 1.0) > 1e-9)
            throw SimulatorError("transition row " + std::to_string(i) +
                                 " does not sum to 1");
        double ap = accept_prob_by_state[i];
        if (ap < 0.0 || ap > 1.0)
            throw SimulatorError("acceptance probability outside [0,1]");
    }
    if (writing_time_given_reject.mean() <= editing_time_given_accept.mean())
        throw SimulatorError(
            "assumption 2 violated: E[writing|reject] must exceed E[editing|accept]");
    if (confidence_noise_sigma < 0.0)
        throw SimulatorError("confidence noise sigma must be >= 0");
}

ProgrammerProfile ProgrammerProfile::defaults() {
    ProgrammerProfile p;
    for (auto& row : p.state_transition) row.fill(1.0 / kNumLatentStates);
    p.accept_prob_by_state = {0.70, 0.16, 0.25, 0.19, 0.21, 0.16,
                              0.42, 0.11, 0.36, 0.25, 0.98};
    p.expects_suggestion_by_state.fill(false);
    p.expects_suggestion_by_state[static_cast<int>(LatentState::WaitingForSuggestion)] = true;
    p.expects_suggestion_by_state[static_cast<int>(LatentState::ThinkingVerifyingSuggestion)] =
        true;
    p.verification_time = DistSpec::lognormal(5.0, 0.6);
    p.editing_time_given_accept = DistSpec::lognormal(10.0, 0.6);
    p.writing_time_given_reject = DistSpec::lognormal(30.0, 0.6);
    p.writing_time_not_shown = DistSpec::lognormal(30.0, 0.6);
    p.latency_tau = DistSpec::point(1.0);
    return p;
}

ProgrammerProfile ProgrammerProfile::default_cohort() {
    ProgrammerProfile p = defaults();
    // Sticky state dynamics: recent actions carry information about the
    // current state, which gives the stage-1 model signal.
    for (int i = 0; i < kNumLatentStates; ++i) {
        for (int j = 0; j < kNumLatentStates; ++j)
            p.state_transition[i][j] = 0.5 / kNumLatentStates;
        p.state_transition[i][i] += 0.5;
    }
    p.quality_weight = 0.8;
    p.length_weight = -0.25;
    p.confidence_noise_sigma = 0.3;
    p.comment_logit_offset = 0.3;
    p.single_char_logit_offset = -2.6;
    p.mid_word_logit_offset = -2.2;
    return p;
}

void SimulationConfig::validate() const {
    if (n_programmers < 1 || sessions_per_programmer < 1 || events_per_session < 1)
        throw SimulatorError("simulation counts must be >= 1");
    if (vocabulary_size < 8) throw SimulatorError("vocabulary too small");
    if (prompt_tokens_min < 1 || prompt_tokens_max < prompt_tokens_min ||
        suggestion_tokens_min < 1 || suggestion_tokens_max < suggestion_tokens_min)
        throw SimulatorError("invalid token length range");
    for (double r : {comment_rate, single_char_rate, mid_word_rate, browse_rate})
        if (r < 0.0 || r > 1.0) throw SimulatorError("rate outside [0,1]");
    if (comment_rate + single_char_rate + mid_word_rate > 1.0)
        throw SimulatorError("category rates sum above 1");
}

namespace {

std::vector<std::string> build_vocabulary(int size) {
    std::vector<std::string> v = {"def",   "return", "import", "for",   "if",
                                  "else",  "class",  "try",    "print", "range",
                                  "len",   "self",   "data",   "value", "result",
                                  "index", "count",  "total",  "item",  "node"};
    for (int i = 0; static_cast<int>(v.size()) < size; ++i)
        v.push_back("var" + std::to_string(i));
    v.resize(static_cast<std::size_t>(size));
    return v;
}

enum class SuggestionCategory { Normal, Comment, SingleChar, MidWord };

struct GeneratedPair {
    std::string prompt;
    std::string suggestion;
    SuggestionCategory category;
};

GeneratedPair generate_text(const SimulationConfig& cfg,
                            const std::vector<std::string>& vocab, rng::Stream& stream) {
    GeneratedPair out;
    int n_prompt = cfg.prompt_tokens_min +
                   static_cast<int>(stream.below(static_cast<std::uint64_t>(
                       cfg.prompt_tokens_max - cfg.prompt_tokens_min + 1)));
    std::ostringstream prompt;
    for (int i = 0; i < n_prompt; ++i) {
        prompt << vocab[stream.below(vocab.size())];
        prompt << (stream.uniform() < 0.2 ? '\n' : ' ');
    }

    double u = stream.uniform();
    if (u < cfg.single_char_rate) {
        out.category = SuggestionCategory::SingleChar;
        static const char* singles[] = {"(", ")", "[", ":", ";"};
        out.prompt = prompt.str() + "\n";
        out.suggestion = singles[stream.below(5)];
        return out;
    }
    if (u < cfg.single_char_rate + cfg.comment_rate) {
        out.category = SuggestionCategory::Comment;
        out.prompt = prompt.str() + "\n";
        std::ostringstream s;
        s << "#";
        int k = 1 + static_cast<int>(stream.below(4));
        for (int i = 0; i < k; ++i) s << ' ' << vocab[stream.below(vocab.size())];
        out.suggestion = s.str();
        return out;
    }
    if (u < cfg.single_char_rate + cfg.comment_rate + cfg.mid_word_rate) {
        out.category = SuggestionCategory::MidWord;
        // Prompt ends mid-identifier; suggestion completes it.
        std::string word = vocab[stream.below(vocab.size())];
        while (word.size() < 4) word += "x";
        std::size_t cut = 1 + stream.below(word.size() - 2);
        out.prompt = prompt.str() + word.substr(0, cut);
        std::ostringstream s;
        s << word.substr(cut) << "()";
        out.suggestion = s.str();
        return out;
    }
    out.category = SuggestionCategory::Normal;
    out.prompt = prompt.str() + "\n";
    int n_sug = cfg.suggestion_tokens_min +
                static_cast<int>(stream.below(static_cast<std::uint64_t>(
                    cfg.suggestion_tokens_max - cfg.suggestion_tokens_min + 1)));
    std::ostringstream s;
    for (int i = 0; i < n_sug; ++i) {
        if (i > 0) s << ' ';
        s << vocab[stream.below(vocab.size())];
    }
    out.suggestion = s.str();
    return out;
}

struct ProgrammerOutput {
    std::vector<SessionTrace> sessions;
    std::vector<GroundTruthAnnotation> annotations;
};

ProgrammerOutput simulate_programmer(const SimulationConfig& cfg,
                                     const ProgrammerProfile& profile,
                                     const std::vector<std::string>& vocab,
                                     int programmer_index) {
    rng::Stream stream(rng::substream(cfg.seed, static_cast<std::uint64_t>(programmer_index)));
    std::string pid = "p" + std::to_string(programmer_index);

    ProgrammerOutput out;
    std::int64_t t_ms = 0;
    int state = static_cast<int>(stream.below(kNumLatentStates));

    auto sample_ms = [&](const DistSpec& d) {
        double s = d.sample(stream.next_bits(), 0);
        return std::max<std::int64_t>(1, std::llround(s * 1000.0));
    };

    for (int si = 0; si < cfg.sessions_per_programmer; ++si) {
        SessionTrace trace;
        trace.programmer_id = pid;
        trace.session_index = si;
        if (si > 0)  // gap strictly above the 30-minute session bound
            t_ms += kDefaultGapLimitMs + 60'000 +
                    static_cast<std::int64_t>(stream.below(10 * 60'000));

        for (int ei = 0; ei < cfg.events_per_session; ++ei) {
            // Markov step over latent states.
            double u = stream.uniform(), acc = 0.0;
            for (int j = 0; j < kNumLatentStates; ++j) {
                acc += profile.state_transition[static_cast<std::size_t>(state)]
                                               [static_cast<std::size_t>(j)];
                if (u <= acc || j == kNumLatentStates - 1) {
                    state = j;
                    break;
                }
            }

            GeneratedPair text = generate_text(cfg, vocab, stream);
            double base = profile.accept_prob_by_state[static_cast<std::size_t>(state)];
            double len_z = (static_cast<double>(text.suggestion.size()) - 18.0) / 12.0;
            len_z = std::clamp(len_z, -3.0, 3.0);
            double offset = 0.0;
            if (text.category == SuggestionCategory::Comment)
                offset = profile.comment_logit_offset;
            else if (text.category == SuggestionCategory::SingleChar)
                offset = profile.single_char_logit_offset;
            else if (text.category == SuggestionCategory::MidWord)
                offset = profile.mid_word_logit_offset;

            double quality = stream.normal();
            double p_true;
            if (profile.quality_weight == 0.0 && profile.length_weight == 0.0 &&
                offset == 0.0) {
                p_true = base;  // pinned exactly to the state base rate
            } else {
                p_true = sigmoid(logit(base) + profile.quality_weight * quality +
                                 profile.length_weight * len_z + offset);
            }
            double confidence = profile.confidence_noise_sigma > 0.0
                                    ? sigmoid(logit(p_true) +
                                              profile.confidence_noise_sigma * stream.normal())
                                    : p_true;
            bool accept = stream.uniform() < p_true;
            bool expecting =
                profile.expects_suggestion_by_state[static_cast<std::size_t>(state)];

            if (expecting) t_ms += sample_ms(profile.latency_tau);

            TelemetryEvent shown;
            shown.timestamp_ms = t_ms;
            shown.action = ActionKind::Shown;
            shown.prompt = text.prompt;
            shown.suggestion = text.suggestion;
            shown.suggestion_confidence = confidence;
            shown.programmer_id = pid;
            trace.events.push_back(shown);

            GroundTruthAnnotation ann;
            ann.programmer_id = pid;
            ann.latent_state = static_cast<LatentState>(state);
            ann.true_accept_prob = p_true;
            ann.expects_suggestion = expecting;
            ann.true_pstar = closed_form_pstar(profile, expecting);
            ann.true_delta_seconds = closed_form_delta(profile, p_true, expecting);
            out.annotations.push_back(ann);

            std::int64_t verify_ms = sample_ms(profile.verification_time);
            std::int64_t t_outcome = t_ms + verify_ms;

            if (stream.uniform() < cfg.browse_rate) {
                TelemetryEvent browsed = shown;
                browsed.action = ActionKind::Browsed;
                browsed.timestamp_ms = t_ms + verify_ms / 2;
                browsed.suggestion = text.suggestion + " alt";
                trace.events.push_back(browsed);
            }

            TelemetryEvent outcome = shown;
            outcome.action = accept ? ActionKind::Accepted : ActionKind::Rejected;
            outcome.timestamp_ms = t_outcome;
            trace.events.push_back(outcome);

            t_ms = t_outcome + sample_ms(accept ? profile.editing_time_given_accept
                                                : profile.writing_time_given_reject);
        }
        out.sessions.push_back(std::move(trace));
    }
    return out;
}

}  // namespace

CohortResult simulate_cohort(const SimulationConfig& config, const ProgrammerProfile& profile) {
    return simulate_cohort(config, std::vector<ProgrammerProfile>{profile});
}

CohortResult simulate_cohort(const SimulationConfig& config,
                             const std::vector<ProgrammerProfile>& profiles) {
    config.validate();
    if (profiles.empty()) throw SimulatorError("at least one profile required");
    for (const auto& p : profiles) p.validate();
    const auto vocab = build_vocabulary(config.vocabulary_size);

    std::vector<ProgrammerOutput> per_programmer(
        static_cast<std::size_t>(config.n_programmers));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int p = 0; p < config.n_programmers; ++p)
        per_programmer[static_cast<std::size_t>(p)] = simulate_programmer(
            config, profiles[static_cast<std::size_t>(p) % profiles.size()], vocab, p);

    CohortResult result;
    result.store.provenance = Provenance::Simulated;
    std::int64_t next_event_id = 0;
    for (auto& po : per_programmer) {
        std::size_t ann_idx_base = result.annotations.size();
        result.annotations.insert(result.annotations.end(), po.annotations.begin(),
                                  po.annotations.end());
        std::size_t ann_cursor = ann_idx_base;
        for (auto& trace : po.sessions) {
            for (auto& e : trace.events) {
                e.event_id = next_event_id++;
                if (e.action == ActionKind::Shown)
                    result.annotations[ann_cursor++].event_id = e.event_id;
            }
            result.store.sessions.push_back(std::move(trace));
        }
    }
    return result;
}

void write_annotations(const std::vector<GroundTruthAnnotation>& anns,
                       const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimulatorError("cannot write annotations: " + path);
    for (const auto& a : anns) {
        json j;
        j["event_id"] = a.event_id;
        j["programmer_id"] = a.programmer_id;
        j["latent_state"] = to_string(a.latent_state);
        j["true_accept_prob"] = a.true_accept_prob;
        j["true_pstar"] = a.true_pstar;
        j["true_delta_seconds"] = a.true_delta_seconds;
        j["expects_suggestion"] = a.expects_suggestion;
        out << j.dump() << '\n';
    }
}

std::vector<GroundTruthAnnotation> read_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SimulatorError("cannot open annotations: " + path);
    std::vector<GroundTruthAnnotation> anns;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        GroundTruthAnnotation a;
        a.event_id = j.at("event_id").get<std::int64_t>();
        a.programmer_id = j.at("programmer_id").get<std::string>();
        a.latent_state = latent_state_from_string(j.at("latent_state").get<std::string>());
        a.true_accept_prob = j.at("true_accept_prob").get<double>();
        a.true_pstar = j.at("true_pstar").get<double>();
        a.true_delta_seconds = j.at("true_delta_seconds").get<double>();
        a.expects_suggestion = j.at("expects_suggestion").get<bool>();
        anns.push_back(std::move(a));
    }
    return anns;
}

namespace {

double sample_decision_time(const ProgrammerProfile& profile, double p_accept,
                            bool expecting, bool show_decision, std::uint64_t sub) {
    if (!show_decision) return profile.writing_time_not_shown.sample(sub, 4);
    double t = profile.verification_time.sample(sub, 0);
    bool accept = rng::uniform01(sub, 10) < p_accept;
    t += accept ? profile.editing_time_given_accept.sample(sub, 1)
                : profile.writing_time_given_reject.sample(sub, 2);
    if (expecting) t += profile.latency_tau.sample(sub, 3);
    return t;
}

MonteCarloEstimate summarize_samples(const std::vector<double>& samples) {
    double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= n;
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var = samples.size() > 1 ? var / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

}  // namespace

MonteCarloEstimate monte_carlo_time(const ProgrammerProfile& profile, double p_accept,
                                    bool expecting, bool show_decision,
                                    std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw SimulatorError("n_samples must be >= 1");
    std::vector<double> samples(n_samples);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_samples); ++i) {
        std::uint64_t sub = rng::bits(seed, static_cast<std::uint64_t>(i));
        samples[static_cast<std::size_t>(i)] =
            sample_decision_time(profile, p_accept, expecting, show_decision, sub);
    }
    // Serial reduction keeps the result independent of the thread count.
    return summarize_samples(samples);
}

MonteCarloEstimate monte_carlo_time_serial(const ProgrammerProfile& profile, double p_accept,
                                           bool expecting, bool show_decision,
                                           std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw SimulatorError("n_samples must be >= 1");
    std::vector<double> samples(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        std::uint64_t sub = rng::bits(seed, i);
        samples[i] = sample_decision_time(profile, p_accept, expecting, show_decision, sub);
    }
    return summarize_samples(samples);
}

double closed_form_delta(const ProgrammerProfile& profile, double p_accept, bool expecting) {
    double shown = profile.verification_time.mean() +
                   p_accept * profile.editing_time_given_accept.mean() +
                   (1.0 - p_accept) * profile.writing_time_given_reject.mean();
    double latency = expecting ? profile.latency_tau.mean() : 0.0;
    return profile.writing_time_not_shown.mean() - shown - latency;
}

double closed_form_pstar(const ProgrammerProfile& profile, bool expecting) {
    double denom = profile.writing_time_given_reject.mean() -
                   profile.editing_time_given_accept.mean();
    if (denom <= 0.0)
        throw SimulatorError(
            "assumption 2 violated: E[writing|reject] must exceed E[editing|accept]");
    double latency = expecting ? profile.latency_tau.mean() : 0.0;
    return (profile.verification_time.mean() + latency) / denom;
}

Proposition1Report verify_proposition1(const ProgrammerProfile& profile,
                                       const std::vector<double>& accept_prob_grid,
                                       std::size_t n_samples, std::uint64_t seed) {
    profile.validate();
    if (std::abs(profile.writing_time_given_reject.mean() -
                 profile.writing_time_not_shown.mean()) > 1e-9)
        throw SimulatorError(
            "assumption 3 violated: E[writing|reject] must equal E[writing, not shown]");

    Proposition1Report report;
    report.pstar = closed_form_pstar(profile, true);
    report.all_agree = true;
    for (std::size_t gi = 0; gi < accept_prob_grid.size(); ++gi) {
        double p = accept_prob_grid[gi];
        if (p < 0.0 || p > 1.0) throw SimulatorError("grid probability outside [0,1]");
        Proposition1Row row;
        row.p = p;
        row.delta_closed_form = closed_form_delta(profile, p, true);

        std::uint64_t s1 = rng::substream(seed, 2 * gi);
        std::uint64_t s2 = rng::substream(seed, 2 * gi + 1);
        auto shown = monte_carlo_time(profile, p, true, true, n_samples, s1);
        auto hidden = monte_carlo_time(profile, p, true, false, n_samples, s2);
        row.delta_monte_carlo = hidden.mean - shown.mean;
        row.combined_stderr =
            std::sqrt(shown.stderr_ * shown.stderr_ + hidden.stderr_ * hidden.stderr_);

        bool mc_ok = std::abs(row.delta_monte_carlo - row.delta_closed_form) <=
                     3.0 * row.combined_stderr;
        bool sign_ok = std::abs(p - report.pstar) <= 1e-12
                           ? std::abs(row.delta_closed_form) <= 1e-9
                           : (row.delta_closed_form > 0) == (p > report.pstar);
        row.agreement = mc_ok && sign_ok;
        report.all_agree = report.all_agree && row.agreement;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace cdhf
