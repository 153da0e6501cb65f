#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cdhf/features.hpp"
#include "cdhf/models.hpp"
#include "cdhf/policy.hpp"
#include "cdhf/rng.hpp"
#include "cdhf/simulator.hpp"
#include "doctest.h"

using namespace cdhf;

namespace {

UtilityParameters paper_params() {
    UtilityParameters u;
    u.expected_verification_s = 5.0;
    u.expected_editing_given_accept_s = 10.0;
    u.expected_writing_given_reject_s = 30.0;
    u.expected_writing_not_shown_s = 30.0;
    u.expected_latency_s = 1.0;
    return u;
}

// A pair of trained stage models over the canonical schemas, fit on a tiny
// simulated store; decision tests only need valid models, not good ones.
struct ModelPair {
    AcceptanceModel m1, m2;
};

ModelPair tiny_models() {
    SimulationConfig cfg;
    cfg.n_programmers = 4;
    cfg.sessions_per_programmer = 2;
    cfg.events_per_session = 60;
    cfg.seed = 3;
    auto r = simulate_cohort(cfg, ProgrammerProfile::default_cohort());
    TreeEnsembleParams p;
    p.n_trees = 10;
    auto s1 = make_schema(1);
    auto s2 = make_schema(2);
    return {train_tree_ensemble(build_dataset(r.store, s1), s1, p),
            train_tree_ensemble(build_dataset(r.store, s2), s2, p)};
}

TelemetryEvent prompt_event() {
    TelemetryEvent e;
    e.action = ActionKind::Shown;
    e.prompt = "def run(x):";
    e.suggestion = "return x * 2";
    e.suggestion_confidence = 0.5;
    e.programmer_id = "u1";
    return e;
}

}  // namespace

TEST_CASE("expected_time_shown arithmetic") {
    UtilityParameters u;
    u.expected_verification_s = 4.0;
    u.expected_editing_given_accept_s = 6.0;
    u.expected_writing_given_reject_s = 20.0;
    u.expected_writing_not_shown_s = 20.0;
    CHECK(expected_time_shown(u, 0.5) == doctest::Approx(17.0));
    CHECK(expected_time_shown(u, 1.0) == doctest::Approx(10.0));
    CHECK(expected_time_shown(u, 0.0) == doctest::Approx(24.0));
    CHECK_THROWS_AS(expected_time_shown(u, 1.5), PolicyError);
    CHECK_THROWS_AS(expected_time_shown(u, -0.1), PolicyError);
}

TEST_CASE("suggestion_utility arithmetic") {
    auto u = paper_params();
    CHECK(suggestion_utility(u, 0.3, true) == doctest::Approx(0.0));
    CHECK(suggestion_utility(u, 0.5, true) == doctest::Approx(4.0));
    CHECK(suggestion_utility(u, 0.3, false) == doctest::Approx(1.0));
}

TEST_CASE("pstar arithmetic and flags") {
    auto u = paper_params();
    auto r = pstar(u);
    CHECK(r.value == doctest::Approx(0.3));
    CHECK_FALSE(r.out_of_range);

    u.expected_verification_s = 0.0;
    u.expected_latency_s = 0.0;
    CHECK(pstar(u).value == 0.0);

    u.expected_verification_s = 25.0;
    auto big = pstar(u);
    CHECK(big.value == doctest::Approx(1.25));
    CHECK(big.out_of_range);

    u.expected_editing_given_accept_s = 40.0;  // denominator <= 0
    CHECK_THROWS_WITH_AS(pstar(u), doctest::Contains("assumption 2"), PolicyError);
}

TEST_CASE("pstar enforces the equal-writing assumption unless waived") {
    auto u = paper_params();
    u.expected_writing_not_shown_s = 25.0;
    CHECK_THROWS_AS(pstar(u), PolicyError);
    CHECK(pstar(u, true).value == doctest::Approx(0.3));
}

TEST_CASE("utility sign equals threshold comparison over the grid") {
    for (int trial = 0; trial < 20; ++trial) {
        UtilityParameters u;
        auto s = rng::substream(61, "grid") + static_cast<std::uint64_t>(trial);
        u.expected_editing_given_accept_s = 5.0 * rng::uniform01(s, 0);
        u.expected_writing_given_reject_s =
            u.expected_editing_given_accept_s + 5.0 + 30.0 * rng::uniform01(s, 1);
        u.expected_writing_not_shown_s = u.expected_writing_given_reject_s;
        u.expected_verification_s = 8.0 * rng::uniform01(s, 2);
        u.expected_latency_s = 2.0 * rng::uniform01(s, 3);
        auto ps = pstar(u);
        for (int i = 0; i <= 1000; ++i) {
            double p = i / 1000.0;
            double d = suggestion_utility(u, p, true);
            if (std::abs(p - ps.value) < 1e-12)
                CHECK(std::abs(d) < 1e-9);
            else
                CHECK((d > 0) == (p > ps.value));
        }
    }
}

TEST_CASE("delta slope equals writing minus editing") {
    auto u = paper_params();
    double slope = (suggestion_utility(u, 1.0, false) - suggestion_utility(u, 0.0, false));
    CHECK(slope ==
          doctest::Approx(u.expected_writing_given_reject_s -
                          u.expected_editing_given_accept_s));
}

TEST_CASE("decide stages and provider discipline") {
    auto models = tiny_models();
    auto e = prompt_event();
    std::span<const TelemetryEvent> no_ctx;
    int calls = 0;
    auto provider = [&] {
        ++calls;
        return e;
    };

    // v1 = 1 forces a stage-1 hide regardless of the model.
    auto d = decide(models.m1, models.m2, {1.0, 0.0}, e, no_ctx, provider);
    CHECK(d.outcome == DisplayOutcome::HiddenStage1);
    CHECK(calls == 0);
    CHECK_FALSE(d.stage2_prob.has_value());

    // v1 = 0 always passes stage 1; v2 = 1 forces a stage-2 hide.
    d = decide(models.m1, models.m2, {0.0, 1.0}, e, no_ctx, provider);
    CHECK(d.outcome == DisplayOutcome::HiddenStage2);
    CHECK(calls == 1);
    REQUIRE(d.stage2_prob.has_value());

    // Degenerate thresholds show everything with positive probabilities.
    d = decide(models.m1, models.m2, {0.0, 0.0}, e, no_ctx, provider);
    CHECK(d.outcome == DisplayOutcome::Shown);
    CHECK(d.stage1_prob > 0.0);
    CHECK(calls == 2);
}

TEST_CASE("decide surfaces provider failure") {
    auto models = tiny_models();
    auto e = prompt_event();
    std::span<const TelemetryEvent> no_ctx;
    CHECK_THROWS_AS(decide(models.m1, models.m2, {0.0, 0.0}, e, no_ctx,
                           []() -> TelemetryEvent { throw PolicyError("provider down"); }),
                    PolicyError);
}

TEST_CASE("rank_suggestions prefers the highest acceptance probability") {
    auto u = paper_params();
    CHECK(rank_suggestions(std::vector<double>{0.2, 0.7, 0.5}, u) == 1);
    CHECK(rank_suggestions(std::vector<double>{0.4}, u) == 0);
    CHECK(rank_suggestions(std::vector<double>{0.6, 0.6}, u) == 0);
    CHECK_THROWS_AS(rank_suggestions(std::vector<double>{}, u), PolicyError);
}

TEST_CASE("select_thresholds on separable scores") {
    std::vector<double> s1, s2;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
        int l = i % 2;
        labels.push_back(l);
        s1.push_back(l ? 0.8 : 0.2);
        s2.push_back(l ? 0.9 : 0.1);
    }
    auto pick = select_thresholds(s1, s2, labels, 1.0);
    CHECK(pick.feasible);
    CHECK(pick.hidden_fraction == doctest::Approx(0.5));
    CHECK(pick.overall_precision == 1.0);

    // All-positive labels: hiding anything means hiding accepts.
    std::vector<int> all_pos(200, 1);
    auto infeasible = select_thresholds(s1, s2, all_pos, 0.9);
    CHECK_FALSE(infeasible.feasible);
    CHECK(infeasible.thresholds.v1 == 0.0);
    CHECK(infeasible.thresholds.v2 == 0.0);

    CHECK_THROWS_AS(select_thresholds(s1, s2, labels, 0.4), PolicyError);
}

TEST_CASE("hidden set grows monotonically with thresholds") {
    std::vector<double> s1, s2;
    std::vector<int> labels;
    for (std::size_t i = 0; i < 500; ++i) {
        s1.push_back(rng::uniform01(71, 2 * i));
        s2.push_back(rng::uniform01(71, 2 * i + 1));
        labels.push_back(rng::uniform01(72, i) < 0.3 ? 1 : 0);
    }
    TwoStageCounts counts(s1, s2, labels, 100);
    auto hidden = [&](int k1, int k2) { return counts.at(k1, k2).hidden(); };
    for (int k = 0; k <= 90; k += 10) {
        CHECK(hidden(k + 10, 30) >= hidden(k, 30));
        CHECK(hidden(30, k + 10) >= hidden(30, k));
    }
}

TEST_CASE("lower-bound soundness on simulator annotations") {
    SimulationConfig cfg;
    cfg.n_programmers = 5;
    cfg.sessions_per_programmer = 2;
    cfg.events_per_session = 80;
    cfg.seed = 15;
    auto r = simulate_cohort(cfg, ProgrammerProfile::default_cohort());
    double min_pstar = 1.0;
    for (const auto& a : r.annotations) min_pstar = std::min(min_pstar, a.true_pstar);
    const double v = min_pstar;  // any constant threshold <= min pstar
    for (const auto& a : r.annotations)
        if (a.true_accept_prob <= v) CHECK(a.true_delta_seconds <= 1e-9);
}
