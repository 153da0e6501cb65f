#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>

#include "cdhf/simulator.hpp"
#include "cdhf/telemetry.hpp"
#include "doctest.h"

using namespace cdhf;

namespace {

// Pin the latent dynamics to a single state.
ProgrammerProfile pinned(LatentState s) {
    auto p = ProgrammerProfile::defaults();
    for (auto& row : p.state_transition) {
        row.fill(0.0);
        row[static_cast<std::size_t>(s)] = 1.0;
    }
    return p;
}

SimulationConfig small_config(int programmers, int sessions, int events,
                              std::uint64_t seed) {
    SimulationConfig c;
    c.n_programmers = programmers;
    c.sessions_per_programmer = sessions;
    c.events_per_session = events;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("table of per-state acceptance probabilities") {
    auto p = ProgrammerProfile::defaults();
    auto prob = [&](LatentState s) {
        return p.accept_prob_by_state[static_cast<std::size_t>(s)];
    };
    CHECK(prob(LatentState::ThinkingVerifyingSuggestion) == 0.70);
    CHECK(prob(LatentState::PromptCrafting) == 0.16);
    CHECK(prob(LatentState::LookingUpDocumentation) == 0.25);
    CHECK(prob(LatentState::WritingNewFunctionality) == 0.19);
    CHECK(prob(LatentState::ThinkingAboutNewCodeToWrite) == 0.21);
    CHECK(prob(LatentState::EditingLastSuggestion) == 0.16);
    CHECK(prob(LatentState::WaitingForSuggestion) == 0.42);
    CHECK(prob(LatentState::EditingWrittenCode) == 0.11);
    CHECK(prob(LatentState::WritingDocumentation) == 0.36);
    CHECK(prob(LatentState::DebuggingTestingCode) == 0.25);
    CHECK(prob(LatentState::DeferringThoughtForLater) == 0.98);
}

TEST_CASE("latent state names round-trip") {
    for (int i = 0; i < kNumLatentStates; ++i) {
        auto s = static_cast<LatentState>(i);
        CHECK(latent_state_from_string(to_string(s)) == s);
    }
    CHECK(to_string(LatentState::ThinkingVerifyingSuggestion) ==
          "Thinking/Verifying Suggestion");
    CHECK_THROWS_AS(latent_state_from_string("Daydreaming"), SimulatorError);
}

TEST_CASE("profile validation names the violated assumption") {
    auto p = ProgrammerProfile::defaults();
    p.state_transition[0][0] += 0.5;  // row no longer stochastic
    CHECK_THROWS_AS(p.validate(), SimulatorError);

    p = ProgrammerProfile::defaults();
    p.writing_time_given_reject = DistSpec::point(5.0);
    p.editing_time_given_accept = DistSpec::point(10.0);
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("assumption 2"), SimulatorError);
}

TEST_CASE("distribution sampling matches declared means") {
    for (auto spec : {DistSpec::point(7.0), DistSpec::lognormal(7.0, 0.6),
                      DistSpec::exponential(7.0)}) {
        double sum = 0.0;
        const std::size_t n = 200000;
        for (std::size_t i = 0; i < n; ++i) sum += spec.sample(77, i);
        CHECK(sum / static_cast<double>(n) == doctest::Approx(7.0).epsilon(0.02));
    }
    CHECK(DistSpec::point(3.0).sample(1, 0) == 3.0);
}

TEST_CASE("pinned high-acceptance state converges") {
    auto p = pinned(LatentState::DeferringThoughtForLater);  // accept prob 0.98
    auto r = simulate_cohort(small_config(10, 1, 1000, 5), p);
    auto s = summarize(r.store);
    REQUIRE(s.acceptance_rate.has_value());
    CHECK(*s.acceptance_rate >= 0.975);
    CHECK(*s.acceptance_rate <= 0.985);
}

TEST_CASE("pinned low-acceptance state converges") {
    auto p = pinned(LatentState::EditingWrittenCode);  // accept prob 0.11
    auto r = simulate_cohort(small_config(10, 1, 1000, 6), p);
    auto s = summarize(r.store);
    REQUIRE(s.acceptance_rate.has_value());
    CHECK(*s.acceptance_rate >= 0.10);
    CHECK(*s.acceptance_rate <= 0.12);
}

TEST_CASE("cohort acceptance rate converges to the configured mean") {
    // With the stock profile the generative weights are zero, so the
    // per-event acceptance probability is exactly the per-state table value
    // and uniform transitions make the expected rate the table mean.
    auto p = ProgrammerProfile::defaults();
    double configured = 0.0;
    for (double v : p.accept_prob_by_state) configured += v;
    configured /= kNumLatentStates;
    auto r = simulate_cohort(small_config(10, 10, 100, 9), p);
    auto s = summarize(r.store);
    REQUIRE(s.acceptance_rate.has_value());
    CHECK(std::abs(*s.acceptance_rate - configured) <= 0.03);
}

TEST_CASE("zero acceptance probabilities yield zero accepts") {
    auto p = ProgrammerProfile::defaults();
    p.accept_prob_by_state.fill(0.0);
    auto r = simulate_cohort(small_config(3, 2, 50, 7), p);
    CHECK(summarize(r.store).accepted == 0);
}

TEST_CASE("simulation is deterministic and annotations align with shown events") {
    auto cfg = small_config(4, 3, 30, 11);
    auto profile = ProgrammerProfile::default_cohort();
    auto a = simulate_cohort(cfg, profile);
    auto b = simulate_cohort(cfg, profile);
    CHECK(serialize_to_string(a.store) == serialize_to_string(b.store));
    CHECK(summarize(a.store).shown == a.annotations.size());

    std::size_t k = 0;
    for (const auto& session : a.store.sessions)
        for (const auto& e : session.events)
            if (e.action == ActionKind::Shown) {
                REQUIRE(k < a.annotations.size());
                CHECK(a.annotations[k].event_id == e.event_id);
                CHECK(a.annotations[k].programmer_id == e.programmer_id);
                ++k;
            }
    CHECK(k == a.annotations.size());
}

TEST_CASE("annotation files round-trip") {
    auto r = simulate_cohort(small_config(2, 1, 10, 3),
                             ProgrammerProfile::default_cohort());
    const char* path = "test_annotations.jsonl";
    write_annotations(r.annotations, path);
    auto back = read_annotations(path);
    REQUIRE(back.size() == r.annotations.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].event_id == r.annotations[i].event_id);
        CHECK(back[i].true_accept_prob == r.annotations[i].true_accept_prob);
        CHECK(back[i].latent_state == r.annotations[i].latent_state);
        CHECK(back[i].true_delta_seconds == r.annotations[i].true_delta_seconds);
    }
    std::remove(path);
}

TEST_CASE("annotation delta sign matches p minus pstar") {
    auto r = simulate_cohort(small_config(4, 2, 50, 13),
                             ProgrammerProfile::default_cohort());
    for (const auto& a : r.annotations) {
        if (std::abs(a.true_accept_prob - a.true_pstar) < 1e-9) continue;
        CHECK((a.true_delta_seconds > 0) == (a.true_accept_prob > a.true_pstar));
    }
}

TEST_CASE("monte carlo on point-mass times is exact") {
    auto p = ProgrammerProfile::defaults();
    p.verification_time = DistSpec::point(4.0);
    p.editing_time_given_accept = DistSpec::point(6.0);
    p.writing_time_given_reject = DistSpec::point(20.0);
    p.writing_time_not_shown = DistSpec::point(20.0);
    p.latency_tau = DistSpec::point(0.0);
    auto est = monte_carlo_time(p, 0.5, false, true, 40000, 17);
    CHECK(est.mean == doctest::Approx(17.0).epsilon(0.01));  // 4 + 0.5*6 + 0.5*20
    auto ns = monte_carlo_time(p, 0.5, false, false, 1000, 17);
    CHECK(ns.mean == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(ns.stderr_ == doctest::Approx(0.0));
}

TEST_CASE("monte carlo matches closed form for exponential times") {
    auto p = ProgrammerProfile::defaults();
    p.verification_time = DistSpec::exponential(5.0);
    p.editing_time_given_accept = DistSpec::exponential(10.0);
    p.writing_time_given_reject = DistSpec::exponential(30.0);
    p.writing_time_not_shown = DistSpec::exponential(30.0);
    p.latency_tau = DistSpec::point(1.0);
    const double pa = 0.6;
    auto shown = monte_carlo_time(p, pa, true, true, 100000, 19);
    double closed = 5.0 + pa * 10.0 + (1 - pa) * 30.0 + 1.0;
    CHECK(std::abs(shown.mean - closed) <= 3.0 * shown.stderr_);
}

TEST_CASE("parallel and serial monte carlo agree bitwise") {
    auto p = ProgrammerProfile::defaults();
    auto a = monte_carlo_time(p, 0.4, true, true, 50000, 23);
    auto b = monte_carlo_time_serial(p, 0.4, true, true, 50000, 23);
    CHECK(a.mean == b.mean);
    CHECK(a.stderr_ == b.stderr_);
}

TEST_CASE("latency only counts when the programmer expects a suggestion") {
    auto p = ProgrammerProfile::defaults();
    p.verification_time = DistSpec::point(5.0);
    p.editing_time_given_accept = DistSpec::point(10.0);
    p.writing_time_given_reject = DistSpec::point(30.0);
    p.writing_time_not_shown = DistSpec::point(30.0);
    p.latency_tau = DistSpec::point(2.0);
    auto with = monte_carlo_time(p, 0.5, true, true, 1000, 29);
    auto without = monte_carlo_time(p, 0.5, false, true, 1000, 29);
    CHECK(with.mean - without.mean == doctest::Approx(2.0));
}

TEST_CASE("closed-form delta and pstar arithmetic") {
    auto p = ProgrammerProfile::defaults();
    p.verification_time = DistSpec::point(5.0);
    p.editing_time_given_accept = DistSpec::point(10.0);
    p.writing_time_given_reject = DistSpec::point(30.0);
    p.writing_time_not_shown = DistSpec::point(30.0);
    p.latency_tau = DistSpec::point(1.0);
    CHECK(closed_form_pstar(p, true) == doctest::Approx(0.3));  // (5+1)/(30-10)
    CHECK(closed_form_delta(p, 0.3, true) == doctest::Approx(0.0));
    CHECK(closed_form_delta(p, 0.5, true) == doctest::Approx(4.0));
    CHECK(closed_form_delta(p, 0.3, false) == doctest::Approx(1.0));
}

TEST_CASE("delta is affine and strictly increasing in p") {
    auto p = ProgrammerProfile::defaults();
    const double slope = p.writing_time_given_reject.mean() -
                         p.editing_time_given_accept.mean();
    REQUIRE(slope > 0);
    double prev = closed_form_delta(p, 0.0, false);
    for (int i = 1; i <= 100; ++i) {
        double x = i / 100.0;
        double d = closed_form_delta(p, x, false);
        CHECK(d - prev == doctest::Approx(slope / 100.0).epsilon(1e-9));
        CHECK(d > prev);
        prev = d;
    }
}

TEST_CASE("verify_proposition1 agrees on a coarse grid") {
    auto p = ProgrammerProfile::defaults();
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
    auto report = verify_proposition1(p, grid, 20000, 31);
    CHECK(report.all_agree);
    CHECK(report.rows.size() == grid.size());
}

TEST_CASE("verify_proposition1 rejects assumption violations by name") {
    auto p = ProgrammerProfile::defaults();
    p.writing_time_not_shown = DistSpec::point(p.writing_time_given_reject.mean() + 5.0);
    CHECK_THROWS_WITH_AS(verify_proposition1(p, {0.5}, 100, 1),
                         doctest::Contains("assumption 3"), SimulatorError);
}

TEST_CASE("cohort sessions respect the segmentation contract") {
    auto r = simulate_cohort(small_config(3, 4, 20, 37),
                             ProgrammerProfile::default_cohort());
    CHECK(summarize(r.store).n_sessions == 12);
    auto resegmented = segment_store(r.store);
    CHECK(serialize_to_string(resegmented) == serialize_to_string(r.store));
}

TEST_CASE("heterogeneous cohorts cycle profiles across programmers") {
    auto a = ProgrammerProfile::defaults();
    a.accept_prob_by_state.fill(0.0);
    auto b = ProgrammerProfile::defaults();
    b.accept_prob_by_state.fill(1.0);
    auto r = simulate_cohort(small_config(2, 1, 50, 41), std::vector{a, b});
    // Programmer 0 never accepts; programmer 1 always does.
    auto s = summarize(r.store);
    CHECK(s.accepted == 50);
    CHECK(s.rejected == 50);
}
