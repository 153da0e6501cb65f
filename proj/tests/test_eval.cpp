#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "cdhf/eval.hpp"
#include "cdhf/features.hpp"
#include "cdhf/metrics.hpp"
#include "cdhf/models.hpp"
#include "cdhf/rng.hpp"
#include "cdhf/simulator.hpp"
#include "doctest.h"

using namespace cdhf;

namespace {

TelemetryStore cohort(int programmers, int sessions, int events, std::uint64_t seed) {
    SimulationConfig cfg;
    cfg.n_programmers = programmers;
    cfg.sessions_per_programmer = sessions;
    cfg.events_per_session = events;
    cfg.seed = seed;
    return simulate_cohort(cfg, ProgrammerProfile::default_cohort()).store;
}

std::set<std::string> programmers_of(const TelemetryStore& s) {
    std::set<std::string> out;
    for (const auto& t : s.sessions) out.insert(t.programmer_id);
    return out;
}

// Independent oracle for the selective-prediction curve.
std::vector<SelectivePoint> selective_bruteforce(std::vector<double> scores,
                                                 std::vector<int> labels) {
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::max(scores[a], 1 - scores[a]) > std::max(scores[b], 1 - scores[b]);
    });
    std::vector<SelectivePoint> out;
    for (int pct = 1; pct <= 100; ++pct) {
        auto k = static_cast<std::size_t>(
            std::ceil(static_cast<double>(scores.size()) * pct / 100.0));
        std::size_t correct = 0;
        for (std::size_t i = 0; i < k; ++i) {
            auto j = order[i];
            correct += (scores[j] > 0.5) == (labels[j] == 1);
        }
        out.push_back({pct, static_cast<double>(correct) / static_cast<double>(k)});
    }
    return out;
}

}  // namespace

TEST_CASE("by-programmer split partitions exactly with largest remainder") {
    auto store = cohort(10, 2, 10, 2);
    SplitSpec spec;
    spec.seed = 5;
    auto parts = split_dataset(store, spec);
    CHECK(programmers_of(parts.train).size() == 7);
    CHECK(programmers_of(parts.val).size() == 1);
    CHECK(programmers_of(parts.test).size() == 2);

    std::set<std::string> all;
    for (const auto* p : {&parts.train, &parts.val, &parts.test})
        for (const auto& id : programmers_of(*p)) CHECK(all.insert(id).second);
    CHECK(all == programmers_of(store));

    auto again = split_dataset(store, spec);
    CHECK(serialize_to_string(again.train) == serialize_to_string(parts.train));
    CHECK(serialize_to_string(again.test) == serialize_to_string(parts.test));
}

TEST_CASE("by-session split keeps sessions whole but splits programmers") {
    auto store = cohort(3, 10, 10, 3);
    SplitSpec spec;
    spec.mode = SplitMode::BySession;
    spec.seed = 6;
    auto parts = split_dataset(store, spec);
    CHECK(parts.train.sessions.size() == 21);
    CHECK(parts.val.sessions.size() == 3);
    CHECK(parts.test.sessions.size() == 6);
    // Some programmer should appear in more than one partition.
    bool overlap = false;
    for (const auto& id : programmers_of(parts.train))
        if (programmers_of(parts.test).count(id)) overlap = true;
    CHECK(overlap);
}

TEST_CASE("split with too few units is an error") {
    auto store = cohort(2, 1, 5, 4);
    SplitSpec spec;
    CHECK_THROWS_AS(split_dataset(store, spec), EvalError);
}

TEST_CASE("selective prediction curve matches brute force") {
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
        std::size_t n = 37 + trial * 211;
        std::vector<double> scores;
        std::vector<int> labels;
        auto seed = rng::substream(81, trial);
        for (std::size_t i = 0; i < n; ++i) {
            scores.push_back(std::floor(rng::uniform01(seed, 2 * i) * 16.0) / 16.0);
            labels.push_back(rng::uniform01(seed, 2 * i + 1) < 0.4 ? 1 : 0);
        }
        labels[0] = 1;
        labels[n - 1] = 0;
        auto got = selective_prediction_curve(scores, labels);
        auto want = selective_bruteforce(scores, labels);
        REQUIRE(got.size() == 100);
        for (std::size_t i = 0; i < 100; ++i) {
            CHECK(got[i].coverage_pct == want[i].coverage_pct);
            CHECK(got[i].accuracy == want[i].accuracy);
        }
        CHECK(got.back().accuracy ==
              doctest::Approx(classification_report(scores, labels).accuracy));
    }
}

TEST_CASE("selective curve on separable scores is flat at one") {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        labels.push_back(i % 2);
        scores.push_back(i % 2 ? 0.95 : 0.05);
    }
    for (const auto& p : selective_prediction_curve(scores, labels))
        CHECK(p.accuracy == 1.0);
}

TEST_CASE("sweep endpoints") {
    std::vector<double> s1, s2;
    std::vector<int> labels;
    for (std::size_t i = 0; i < 400; ++i) {
        s1.push_back(rng::uniform01(91, 2 * i));
        s2.push_back(rng::uniform01(91, 2 * i + 1));
        labels.push_back(rng::uniform01(92, i) < 0.3 ? 1 : 0);
    }
    double base_accept = 0.0;
    for (int l : labels) base_accept += l;
    base_accept /= static_cast<double>(labels.size());

    auto curve = sweep_thresholds(s1, s2, labels, 100);
    REQUIRE(curve.points.size() == 101 * 101);
    const auto& origin = curve.points.front();
    CHECK(origin.v1 == 0.0);
    CHECK(origin.v2 == 0.0);
    CHECK(origin.hidden_fraction == 0.0);
    CHECK(origin.shown_acceptance_rate == doctest::Approx(base_accept));
    const auto& corner = curve.points.back();
    CHECK(corner.hidden_fraction == 1.0);
    CHECK(corner.hidden_rejected_precision == doctest::Approx(1.0 - base_accept));
}

TEST_CASE("sweep hidden fraction is monotone in each threshold") {
    std::vector<double> s1, s2;
    std::vector<int> labels;
    for (std::size_t i = 0; i < 300; ++i) {
        s1.push_back(rng::uniform01(93, 2 * i));
        s2.push_back(rng::uniform01(93, 2 * i + 1));
        labels.push_back(rng::uniform01(94, i) < 0.3 ? 1 : 0);
    }
    auto curve = sweep_thresholds(s1, s2, labels, 20);
    auto at = [&](int k1, int k2) -> const TradeoffPoint& {
        return curve.points[static_cast<std::size_t>(k1) * 21 + static_cast<std::size_t>(k2)];
    };
    for (int a = 0; a < 20; ++a)
        for (int b = 0; b < 20; ++b) {
            CHECK(at(a + 1, b).hidden_fraction >= at(a, b).hidden_fraction);
            CHECK(at(a, b + 1).hidden_fraction >= at(a, b).hidden_fraction);
        }
}

TEST_CASE("replay agrees with the sweep and enforces partition disjointness") {
    auto store = cohort(12, 3, 40, 17);
    SplitSpec spec;
    spec.seed = 17;
    auto parts = split_dataset(store, spec);
    auto s1 = make_schema(1);
    auto s2 = make_schema(2);
    TreeEnsembleParams tp;
    tp.n_trees = 30;
    auto m1 = train_tree_ensemble(build_dataset(parts.train, s1), s1, tp);
    auto m2 = train_tree_ensemble(build_dataset(parts.train, s2), s2, tp);

    // Overlap guard: evaluating on the training partition must fail.
    CHECK_THROWS_AS(retrospective_policy_eval({0.2, 0.2}, parts.train, m1, m2), EvalError);

    auto op = retrospective_policy_eval({0.2, 0.2}, parts.test, m1, m2);

    std::vector<double> sc1, sc2;
    std::vector<int> labels;
    for (const auto& session : parts.test.sessions) {
        const auto& ev = session.events;
        for (std::size_t i = 0; i < ev.size(); ++i) {
            if (ev[i].action != ActionKind::Shown) continue;
            std::size_t j = i + 1;
            while (j < ev.size() && ev[j].action == ActionKind::Browsed) ++j;
            if (j >= ev.size() || ev[j].action == ActionKind::Shown) continue;
            std::span<const TelemetryEvent> ctx(ev.data(), i);
            sc1.push_back(m1.predict_proba(extract(ev[i], ctx, s1)));
            sc2.push_back(m2.predict_proba(extract(ev[i], ctx, s2)));
            labels.push_back(ev[j].action == ActionKind::Accepted ? 1 : 0);
        }
    }
    auto curve = sweep_thresholds(sc1, sc2, labels, 100);
    const auto& pt = curve.points[20 * 101 + 20];  // (v1, v2) = (0.2, 0.2)
    CHECK(pt.hidden_fraction == op.hidden_fraction);
    CHECK(pt.stage1_hidden_fraction == op.stage1_hidden_fraction);
    CHECK(op.provider_call_savings == pt.stage1_hidden_fraction);

    auto none = retrospective_policy_eval({0.0, 0.0}, parts.test, m1, m2);
    CHECK(none.hidden_fraction == 0.0);
    CHECK(none.provider_call_savings == 0.0);
}

TEST_CASE("sample complexity includes fraction one and skips starved points") {
    auto store = cohort(8, 2, 50, 19);
    auto schema = make_schema(2);
    auto ds = build_dataset(store, schema);
    auto eval_ds = build_dataset(cohort(4, 2, 50, 20), schema);
    TreeEnsembleParams tp;
    tp.n_trees = 20;
    auto curve = sample_complexity_curve({0.0005, 0.5, 1.0}, ds, eval_ds, schema, tp, 21);
    REQUIRE(curve.size() == 3);
    CHECK(curve[0].skipped);
    CHECK_FALSE(curve[2].skipped);
    auto full = train_tree_ensemble(ds, schema, tp);
    std::vector<double> scores;
    for (const auto& r : eval_ds.rows) scores.push_back(full.predict_proba(r));
    CHECK(curve[2].auroc == doctest::Approx(auroc(scores, eval_ds.labels)));
}

TEST_CASE("verification time regression sanity") {
    auto store = cohort(10, 2, 60, 23);
    auto r = verification_time_regression(store, 23);
    CHECK(r.n_rows >= 50);
    CHECK(std::isfinite(r.r2_model));
    CHECK(std::isfinite(r.r2_median_baseline));

    auto tiny = cohort(1, 1, 10, 23);
    CHECK_THROWS_AS(verification_time_regression(tiny, 23), EvalError);
}

TEST_CASE("report writer emits a manifest with checksums") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "cdhf_report_test";
    fs::remove_all(dir);
    {
        ReportWriter w(dir.string());
        w.write("a.csv", "x,y\n1,2\n");
        w.write("b.txt", "hello\n");
        w.finalize();
    }
    CHECK(fs::exists(dir / "a.csv"));
    CHECK(fs::exists(dir / "manifest.txt"));
    std::ifstream in(dir / "manifest.txt");
    std::string manifest((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    CHECK(manifest.find("a.csv") != std::string::npos);
    CHECK(manifest.find("b.txt") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("tradeoff csv cardinality") {
    std::vector<double> s1 = {0.1, 0.9}, s2 = {0.2, 0.8};
    std::vector<int> labels = {0, 1};
    auto csv = tradeoff_csv(sweep_thresholds(s1, s2, labels, 100));
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    CHECK(lines == 101 * 101 + 1);
}
