#include "cdhf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "cdhf/checksum.hpp"
#include "cdhf/metrics.hpp"
#include "cdhf/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cdhf {

void SplitSpec::validate() const {
    if (train_ratio <= 0 || val_ratio <= 0 || test_ratio <= 0)
        throw EvalError("split ratios must be positive");
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
        throw EvalError("split ratios must sum to 1");
}

namespace {

// Largest-remainder apportionment of n units into the three ratios; every
// partition receives at least one unit or the split errors.
std::array<std::size_t, 3> partition_sizes(std::size_t n, const SplitSpec& spec) {
    const double ratios[3] = {spec.train_ratio, spec.val_ratio, spec.test_ratio};
    std::array<std::size_t, 3> sizes{};
    double remainders[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double exact = ratios[i] * static_cast<double>(n);
        sizes[static_cast<std::size_t>(i)] = static_cast<std::size_t>(std::floor(exact));
        remainders[i] = exact - std::floor(exact);
        assigned += sizes[static_cast<std::size_t>(i)];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (remainders[i] > remainders[best]) best = i;
        ++sizes[static_cast<std::size_t>(best)];
        remainders[best] = -1.0;
        ++assigned;
    }
    for (auto s : sizes)
        if (s == 0)
            throw EvalError("too few programmers/sessions for the requested split");
    return sizes;
}

}  // namespace

SplitResult split_dataset(const TelemetryStore& store, const SplitSpec& spec) {
    spec.validate();

    // Units are programmers or whole sessions, keyed by first appearance.
    std::vector<std::vector<std::size_t>> unit_sessions;  // session indices per unit
    if (spec.mode == SplitMode::ByProgrammer) {
        std::map<std::string, std::size_t> unit_of;
        for (std::size_t si = 0; si < store.sessions.size(); ++si) {
            auto [it, inserted] =
                unit_of.try_emplace(store.sessions[si].programmer_id, unit_sessions.size());
            if (inserted) unit_sessions.emplace_back();
            unit_sessions[it->second].push_back(si);
        }
    } else {
        for (std::size_t si = 0; si < store.sessions.size(); ++si)
            unit_sessions.push_back({si});
    }

    const std::size_t n = unit_sessions.size();
    auto sizes = partition_sizes(n, spec);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng::Stream stream(rng::substream(spec.seed, "split"));
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[stream.below(i)]);

    std::vector<int> part_of_unit(n, 0);
    std::size_t cursor = 0;
    for (int part = 0; part < 3; ++part)
        for (std::size_t k = 0; k < sizes[static_cast<std::size_t>(part)]; ++k)
            part_of_unit[order[cursor++]] = part;

    SplitResult result;
    result.train.provenance = result.val.provenance = result.test.provenance =
        store.provenance;
    std::vector<int> part_of_session(store.sessions.size(), 0);
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t si : unit_sessions[u]) part_of_session[si] = part_of_unit[u];
    for (std::size_t si = 0; si < store.sessions.size(); ++si) {
        TelemetryStore* dst = part_of_session[si] == 0   ? &result.train
                              : part_of_session[si] == 1 ? &result.val
                                                         : &result.test;
        dst->sessions.push_back(store.sessions[si]);
    }
    return result;
}

std::vector<SelectivePoint> selective_prediction_curve(std::span<const double> scores,
                                                       std::span<const int> labels) {
    if (scores.size() != labels.size()) throw EvalError("scores/labels length mismatch");
    bool pos = false, neg = false;
    for (int l : labels) (l ? pos : neg) = true;
    if (!pos || !neg) throw EvalError("both classes must be present");

    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double ca = std::max(scores[a], 1.0 - scores[a]);
        double cb = std::max(scores[b], 1.0 - scores[b]);
        return ca > cb;
    });

    std::vector<SelectivePoint> curve;
    std::size_t correct = 0, taken = 0;
    for (int pct = 1; pct <= 100; ++pct) {
        std::size_t k = (n * static_cast<std::size_t>(pct) + 99) / 100;  // ceil
        while (taken < k) {
            std::size_t i = order[taken++];
            bool pred = scores[i] > 0.5;
            if (pred == (labels[i] != 0)) ++correct;
        }
        curve.push_back({pct, static_cast<double>(correct) / static_cast<double>(k)});
    }
    return curve;
}

TradeoffCurve sweep_thresholds(std::span<const double> stage1_scores,
                               std::span<const double> stage2_scores,
                               std::span<const int> labels, int grid_steps) {
    TwoStageCounts counts(stage1_scores, stage2_scores, labels, grid_steps);
    const double n = static_cast<double>(counts.total());
    if (counts.total() == 0) throw EvalError("empty evaluation set");

    TradeoffCurve curve;
    curve.grid_steps = grid_steps;
    curve.points.resize(static_cast<std::size_t>(grid_steps + 1) *
                        static_cast<std::size_t>(grid_steps + 1));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int k1 = 0; k1 <= grid_steps; ++k1) {
        for (int k2 = 0; k2 <= grid_steps; ++k2) {
            auto c = counts.at(k1, k2);
            TradeoffPoint pt;
            pt.v1 = counts.grid_value(k1);
            pt.v2 = counts.grid_value(k2);
            pt.hidden_fraction = static_cast<double>(c.hidden()) / n;
            pt.hidden_rejected_precision =
                c.hidden() == 0 ? 1.0
                                : static_cast<double>(c.hidden_rejected()) /
                                      static_cast<double>(c.hidden());
            pt.stage1_hidden_fraction = static_cast<double>(c.stage1_hidden) / n;
            std::size_t shown = counts.total() - c.hidden();
            pt.shown_acceptance_rate =
                shown == 0 ? 0.0
                           : static_cast<double>(c.shown_accepted) /
                                 static_cast<double>(shown);
            curve.points[static_cast<std::size_t>(k1) *
                             static_cast<std::size_t>(grid_steps + 1) +
                         static_cast<std::size_t>(k2)] = pt;
        }
    }
    return curve;
}

OperatingPoint retrospective_policy_eval(const PolicyThresholds& thresholds,
                                         const TelemetryStore& test_store,
                                         const AcceptanceModel& stage1_model,
                                         const AcceptanceModel& stage2_model) {
    thresholds.validate();
    {
        // Partition-overlap guard: a model trained on this exact replay set
        // would make the evaluation circular.
        TrainingDataset replay1 = build_dataset(test_store, stage1_model.schema());
        if (replay1.checksum() == stage1_model.metadata().dataset_checksum)
            throw EvalError("stage-1 model was trained on the replay partition");
        TrainingDataset replay2 = build_dataset(test_store, stage2_model.schema());
        if (replay2.checksum() == stage2_model.metadata().dataset_checksum)
            throw EvalError("stage-2 model was trained on the replay partition");
    }

    OperatingPoint op;
    std::size_t s1_hidden = 0, s1_hidden_rej = 0, s2_hidden = 0, s2_hidden_rej = 0;
    std::size_t shown = 0, shown_accepted = 0, provider_calls = 0;

    for (const auto& session : test_store.sessions) {
        const auto& ev = session.events;
        for (std::size_t i = 0; i < ev.size(); ++i) {
            if (ev[i].action != ActionKind::Shown) continue;
            std::size_t j = i + 1;
            while (j < ev.size() && ev[j].action == ActionKind::Browsed) ++j;
            if (j >= ev.size() || ev[j].action == ActionKind::Shown) continue;
            bool accepted = ev[j].action == ActionKind::Accepted;

            std::size_t calls_before = provider_calls;
            DisplayDecision d = decide(
                stage1_model, stage2_model, thresholds, ev[i],
                std::span<const TelemetryEvent>(ev.data(), i), [&]() {
                    ++provider_calls;
                    return ev[i];  // the logged suggestion stands in for the LLM
                });
            ++op.n_events;
            switch (d.outcome) {
                case DisplayOutcome::HiddenStage1:
                    ++s1_hidden;
                    if (!accepted) ++s1_hidden_rej;
                    if (provider_calls != calls_before)
                        throw EvalError("provider invoked on a stage-1 hide");
                    break;
                case DisplayOutcome::HiddenStage2:
                    ++s2_hidden;
                    if (!accepted) ++s2_hidden_rej;
                    break;
                case DisplayOutcome::Shown:
                    ++shown;
                    if (accepted) ++shown_accepted;
                    break;
            }
        }
    }
    if (op.n_events == 0) throw EvalError("replay store yields no labeled shown events");

    double n = static_cast<double>(op.n_events);
    op.hidden_fraction = static_cast<double>(s1_hidden + s2_hidden) / n;
    op.stage1_hidden_fraction = static_cast<double>(s1_hidden) / n;
    op.stage1_precision = s1_hidden == 0 ? 1.0
                                         : static_cast<double>(s1_hidden_rej) /
                                               static_cast<double>(s1_hidden);
    op.stage2_precision = s2_hidden == 0 ? 1.0
                                         : static_cast<double>(s2_hidden_rej) /
                                               static_cast<double>(s2_hidden);
    std::size_t hidden = s1_hidden + s2_hidden;
    op.overall_precision = hidden == 0 ? 1.0
                                       : static_cast<double>(s1_hidden_rej + s2_hidden_rej) /
                                             static_cast<double>(hidden);
    op.shown_acceptance_rate =
        shown == 0 ? 0.0 : static_cast<double>(shown_accepted) / static_cast<double>(shown);
    op.provider_calls = provider_calls;
    op.provider_call_savings = static_cast<double>(op.n_events - provider_calls) / n;
    return op;
}

std::vector<SampleComplexityPoint> sample_complexity_curve(
    const std::vector<double>& fractions, const TrainingDataset& train,
    const TrainingDataset& eval_set, const FeatureSchema& schema,
    const TreeEnsembleParams& params, std::uint64_t seed) {
    for (double f : fractions)
        if (f <= 0.0 || f > 1.0) throw EvalError("fractions must lie in (0, 1]");
    if (schema.id() != train.schema_id || schema.id() != eval_set.schema_id)
        throw EvalError("schema mismatch in sample-complexity curve");

    std::vector<SampleComplexityPoint> curve;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        double f = fractions[fi];
        std::size_t k = static_cast<std::size_t>(
            std::ceil(f * static_cast<double>(train.size())));
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        rng::Stream stream(rng::substream(seed, fi));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[stream.below(i)]);

        TrainingDataset sub;
        sub.schema_id = train.schema_id;
        std::size_t n_pos = 0, n_neg = 0;
        for (std::size_t i = 0; i < k; ++i) {
            sub.rows.push_back(train.rows[order[i]]);
            sub.labels.push_back(train.labels[order[i]]);
            (train.labels[order[i]] ? n_pos : n_neg) += 1;
        }
        SampleComplexityPoint pt;
        pt.fraction = f;
        if (n_pos < 10 || n_neg < 10) {
            pt.skipped = true;  // one class too thin at this fraction
            curve.push_back(pt);
            continue;
        }
        AcceptanceModel model = train_tree_ensemble(sub, schema, params);
        std::vector<double> scores(eval_set.size());
        for (std::size_t i = 0; i < eval_set.size(); ++i)
            scores[i] = model.predict_proba(std::span<const double>(eval_set.rows[i]));
        pt.auroc = auroc(scores, eval_set.labels);
        curve.push_back(pt);
    }
    return curve;
}

RegressionFeasibility verification_time_regression(const TelemetryStore& store,
                                                   std::uint64_t seed,
                                                   const TreeEnsembleParams& params) {
    FeatureSchema schema = make_schema(2);
    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
    for (const auto& session : store.sessions) {
        const auto& ev = session.events;
        for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
            if (ev[i].action != ActionKind::Shown) continue;
            FeatureVector fv =
                extract(ev[i], std::span<const TelemetryEvent>(ev.data(), i), schema);
            rows.push_back(std::move(fv.values));
            targets.push_back(
                static_cast<double>(ev[i + 1].timestamp_ms - ev[i].timestamp_ms) / 1000.0);
        }
    }
    if (rows.size() < 50)
        throw EvalError("verification-time regression needs at least 50 rows");

    // Seeded 80/20 split of rows.
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    rng::Stream stream(rng::substream(seed, "time-regression"));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[stream.below(i)]);
    std::size_t n_train = rows.size() * 4 / 5;

    // The tree trainer consumes integer labels; scale targets through a
    // regression dataset built directly.
    TrainingDataset train_ds;
    train_ds.schema_id = schema.id();
    std::vector<double> train_targets, test_targets;
    std::vector<std::vector<double>> test_rows;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < n_train) {
            train_ds.rows.push_back(rows[order[i]]);
            train_ds.labels.push_back(0);  // unused by the squared objective path
            train_targets.push_back(targets[order[i]]);
        } else {
            test_rows.push_back(rows[order[i]]);
            test_targets.push_back(targets[order[i]]);
        }
    }

    AcceptanceModel model = train_regression(train_ds, schema, train_targets, params);

    double mean_train = std::accumulate(train_targets.begin(), train_targets.end(), 0.0) /
                        static_cast<double>(train_targets.size());
    std::vector<double> sorted = train_targets;
    std::sort(sorted.begin(), sorted.end());
    double median_train = sorted[sorted.size() / 2];

    double sse = 0.0, sse_median = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
        double pred = model.predict_raw(std::span<const double>(test_rows[i]));
        sse += (test_targets[i] - pred) * (test_targets[i] - pred);
        sse_median += (test_targets[i] - median_train) * (test_targets[i] - median_train);
        sst += (test_targets[i] - mean_train) * (test_targets[i] - mean_train);
    }
    RegressionFeasibility r;
    r.n_rows = rows.size();
    r.r2_model = 1.0 - sse / sst;
    r.r2_median_baseline = 1.0 - sse_median / sst;
    return r;
}

std::string tradeoff_csv(const TradeoffCurve& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "v1,v2,hidden_fraction,hidden_rejected_precision,stage1_hidden_fraction,"
           "shown_acceptance_rate\n";
    for (const auto& p : curve.points)
        out << p.v1 << ',' << p.v2 << ',' << p.hidden_fraction << ','
            << p.hidden_rejected_precision << ',' << p.stage1_hidden_fraction << ','
            << p.shown_acceptance_rate << '\n';
    return out.str();
}

std::string selective_csv(const std::vector<SelectivePoint>& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "coverage_pct,accuracy\n";
    for (const auto& p : curve) out << p.coverage_pct << ',' << p.accuracy << '\n';
    return out.str();
}

std::string sample_complexity_csv(const std::vector<SampleComplexityPoint>& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "fraction,auroc,skipped\n";
    for (const auto& p : curve)
        out << p.fraction << ',' << p.auroc << ',' << (p.skipped ? 1 : 0) << '\n';
    return out.str();
}

std::string operating_point_csv(const OperatingPoint& op) {
    std::ostringstream out;
    out.precision(17);
    out << "n_events,hidden_fraction,stage1_hidden_fraction,stage1_precision,"
           "stage2_precision,overall_precision,shown_acceptance_rate,provider_calls,"
           "provider_call_savings\n";
    out << op.n_events << ',' << op.hidden_fraction << ',' << op.stage1_hidden_fraction
        << ',' << op.stage1_precision << ',' << op.stage2_precision << ','
        << op.overall_precision << ',' << op.shown_acceptance_rate << ','
        << op.provider_calls << ',' << op.provider_call_savings << '\n';
    return out.str();
}

std::string operating_point_text(const OperatingPoint& op) {
    std::ostringstream out;
    out << "events replayed:         " << op.n_events << '\n'
        << "hidden fraction:         " << op.hidden_fraction << '\n'
        << "stage-1 hidden fraction: " << op.stage1_hidden_fraction << '\n'
        << "stage-1 precision:       " << op.stage1_precision << '\n'
        << "stage-2 precision:       " << op.stage2_precision << '\n'
        << "overall precision:       " << op.overall_precision << '\n'
        << "shown acceptance rate:   " << op.shown_acceptance_rate << '\n'
        << "provider calls:          " << op.provider_calls << '\n'
        << "provider call savings:   " << op.provider_call_savings << '\n';
    return out.str();
}

ReportWriter::ReportWriter(std::string dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

void ReportWriter::write(const std::string& name, const std::string& content) {
    std::filesystem::path p = std::filesystem::path(dir_) / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw EvalError("cannot write artifact: " + p.string());
    out << content;
    entries_.emplace_back(name, checksum_hex(content));
}

void ReportWriter::finalize() {
    std::sort(entries_.begin(), entries_.end());
    std::ostringstream out;
    for (const auto& [name, sum] : entries_) out << sum << "  " << name << '\n';
    std::filesystem::path p = std::filesystem::path(dir_) / "manifest.txt";
    std::ofstream f(p, std::ios::binary);
    if (!f) throw EvalError("cannot write manifest: " + p.string());
    f << out.str();
}

}  // namespace cdhf
