// cdhf: simulate, ingest, train and evaluate conditional suggestion display
// policies from telemetry logs.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cdhf/checksum.hpp"
#include "cdhf/eval.hpp"
#include "cdhf/features.hpp"
#include "cdhf/metrics.hpp"
#include "cdhf/models.hpp"
#include "cdhf/policy.hpp"
#include "cdhf/rng.hpp"
#include "cdhf/simulator.hpp"
#include "cdhf/telemetry.hpp"
#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

cdhf::ProgrammerProfile profile_by_name(const std::string& name) {
    if (name == "default") return cdhf::ProgrammerProfile::defaults();
    if (name == "cohort") return cdhf::ProgrammerProfile::default_cohort();
    throw cdhf::SimulatorError("unknown profile name: " + name);
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path))
        throw std::runtime_error("missing " + what + " file: " + path +
                                 " (run the producing subcommand first)");
}

struct ScoredStore {
    std::vector<double> stage1, stage2;
    std::vector<int> labels;
};

ScoredStore score_store(const cdhf::TelemetryStore& store,
                        const cdhf::AcceptanceModel& m1, const cdhf::AcceptanceModel& m2) {
    ScoredStore out;
    for (const auto& session : store.sessions) {
        const auto& ev = session.events;
        for (std::size_t i = 0; i < ev.size(); ++i) {
            if (ev[i].action != cdhf::ActionKind::Shown) continue;
            std::size_t j = i + 1;
            while (j < ev.size() && ev[j].action == cdhf::ActionKind::Browsed) ++j;
            if (j >= ev.size() || ev[j].action == cdhf::ActionKind::Shown) continue;
            std::span<const cdhf::TelemetryEvent> ctx(ev.data(), i);
            out.stage1.push_back(m1.predict_proba(cdhf::extract(ev[i], ctx, m1.schema())));
            out.stage2.push_back(m2.predict_proba(cdhf::extract(ev[i], ctx, m2.schema())));
            out.labels.push_back(ev[j].action == cdhf::ActionKind::Accepted ? 1 : 0);
        }
    }
    return out;
}

cdhf::PolicyThresholds load_thresholds(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open thresholds file: " + path);
    json j = json::parse(in);
    cdhf::PolicyThresholds t{j.at("v1").get<double>(), j.at("v2").get<double>()};
    t.validate();
    return t;
}

int run(int argc, char** argv) {
    CLI::App app{"Conditional suggestion display from human feedback"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "declarative run config (option = value per line)");

    int threads = 0;
    std::uint64_t seed = 1;
    app.add_option("--threads", threads, "worker thread cap (0 = library default)");
    app.add_option("--seed", seed, "global seed; all module seeds derive from it");

    // ---- simulate ----
    auto* sim = app.add_subcommand("simulate", "generate a synthetic cohort");
    std::string sim_out, sim_profile = "cohort";
    cdhf::SimulationConfig sim_cfg;
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->add_option("--profile", sim_profile, "programmer profile: default|cohort");
    sim->add_option("--programmers", sim_cfg.n_programmers);
    sim->add_option("--sessions", sim_cfg.sessions_per_programmer);
    sim->add_option("--events", sim_cfg.events_per_session);

    // ---- ingest ----
    auto* ing = app.add_subcommand("ingest", "parse, segment and canonicalize a log");
    std::string ing_in, ing_out;
    ing->add_option("--in", ing_in)->required();
    ing->add_option("--out", ing_out, "output directory")->required();

    // ---- summarize ----
    auto* sum = app.add_subcommand("summarize", "dataset summary statistics");
    std::string sum_in, sum_out;
    sum->add_option("--in", sum_in)->required();
    sum->add_option("--out", sum_out, "optional output directory");

    // ---- split ----
    auto* spl = app.add_subcommand("split", "partition telemetry for train/val/test");
    std::string spl_in, spl_out, spl_mode = "by_programmer";
    spl->add_option("--in", spl_in)->required();
    spl->add_option("--out", spl_out, "output directory")->required();
    spl->add_option("--mode", spl_mode, "by_programmer|by_session");

    // ---- train ----
    auto* trn = app.add_subcommand("train", "train an acceptance model");
    std::string trn_train, trn_out, trn_model = "tree";
    int trn_stage = 2;
    cdhf::TreeEnsembleParams tree_params;
    cdhf::LogisticParams logit_params;
    trn->add_option("--train", trn_train, "training telemetry partition")->required();
    trn->add_option("--out", trn_out, "model file")->required();
    trn->add_option("--stage", trn_stage, "1 or 2")->check(CLI::Range(1, 2));
    trn->add_option("--model", trn_model, "tree|logistic");
    trn->add_option("--trees", tree_params.n_trees);
    trn->add_option("--depth", tree_params.max_depth);
    trn->add_option("--learning-rate", tree_params.learning_rate);
    trn->add_option("--min-leaf", tree_params.min_rows_per_leaf);
    trn->add_option("--epochs", logit_params.epochs);
    trn->add_option("--l2", logit_params.l2_strength);

    // ---- eval ----
    auto* evl = app.add_subcommand("eval", "metrics, curves and retrospective replay");
    std::string evl_m1, evl_m2, evl_test, evl_out, evl_thresholds;
    bool evl_time_regression = false;
    evl->add_option("--stage1-model", evl_m1)->required();
    evl->add_option("--stage2-model", evl_m2)->required();
    evl->add_option("--test", evl_test)->required();
    evl->add_option("--out", evl_out, "output directory")->required();
    evl->add_option("--thresholds", evl_thresholds,
                    "thresholds.json for a retrospective operating point");
    evl->add_flag("--time-regression", evl_time_regression,
                  "also run the verification-time regression feasibility check");

    // ---- sweep ----
    auto* swp = app.add_subcommand("sweep", "full (v1, v2) tradeoff grid");
    std::string swp_m1, swp_m2, swp_test, swp_out;
    int swp_grid = 100;
    swp->add_option("--stage1-model", swp_m1)->required();
    swp->add_option("--stage2-model", swp_m2)->required();
    swp->add_option("--test", swp_test)->required();
    swp->add_option("--out", swp_out, "output directory")->required();
    swp->add_option("--grid", swp_grid, "grid steps per axis");

    // ---- select-thresholds ----
    auto* sel = app.add_subcommand("select-thresholds",
                                   "choose (v1, v2) on validation data");
    std::string sel_m1, sel_m2, sel_val, sel_out;
    double sel_target = 0.9;
    sel->add_option("--stage1-model", sel_m1)->required();
    sel->add_option("--stage2-model", sel_m2)->required();
    sel->add_option("--val", sel_val)->required();
    sel->add_option("--out", sel_out, "thresholds.json path")->required();
    sel->add_option("--target", sel_target, "target hidden-rejected precision");

    // ---- decide ----
    auto* dec = app.add_subcommand("decide", "replay a log through the policy");
    std::string dec_m1, dec_m2, dec_in, dec_out, dec_thresholds;
    double dec_v1 = -1.0, dec_v2 = -1.0;
    dec->add_option("--stage1-model", dec_m1)->required();
    dec->add_option("--stage2-model", dec_m2)->required();
    dec->add_option("--in", dec_in)->required();
    dec->add_option("--out", dec_out, "output directory")->required();
    dec->add_option("--thresholds", dec_thresholds, "thresholds.json");
    dec->add_option("--v1", dec_v1);
    dec->add_option("--v2", dec_v2);

    // ---- verify-prop1 ----
    auto* vp = app.add_subcommand("verify-prop1",
                                  "check the break-even threshold against Monte Carlo");
    std::string vp_profile = "default";
    std::size_t vp_samples = 100000;
    int vp_grid = 21;
    vp->add_option("--profile", vp_profile, "default|cohort");
    vp->add_option("--samples", vp_samples);
    vp->add_option("--grid", vp_grid, "number of probability grid points");

    // ---- sample-complexity ----
    auto* sc = app.add_subcommand("sample-complexity", "AU-ROC vs training fraction");
    std::string sc_train, sc_test, sc_out, sc_fractions = "0.01,0.05,0.1,0.25,0.5,1.0";
    sc->add_option("--train", sc_train)->required();
    sc->add_option("--test", sc_test)->required();
    sc->add_option("--out", sc_out, "output directory")->required();
    sc->add_option("--fractions", sc_fractions, "comma-separated fractions in (0,1]");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage error
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    if (sim->parsed()) {
        sim_cfg.seed = cdhf::rng::substream(seed, "simulate");
        auto result = cdhf::simulate_cohort(sim_cfg, profile_by_name(sim_profile));
        fs::create_directories(sim_out);
        cdhf::write_log_file(result.store, (fs::path(sim_out) / "telemetry.jsonl").string());
        cdhf::write_annotations(result.annotations,
                                (fs::path(sim_out) / "annotations.jsonl").string());
        cdhf::ReportWriter report(sim_out);
        auto s = cdhf::summarize(result.store);
        report.write("summary.txt", cdhf::summary_text(s));
        report.write("summary.csv", cdhf::summary_csv(s));
        report.finalize();
        std::cout << cdhf::summary_text(s);
        return 0;
    }

    if (ing->parsed()) {
        require_file(ing_in, "telemetry");
        auto store = cdhf::parse_log_file(ing_in);
        fs::create_directories(ing_out);
        cdhf::write_log_file(store, (fs::path(ing_out) / "telemetry.jsonl").string());
        auto s = cdhf::summarize(store);
        cdhf::ReportWriter report(ing_out);
        report.write("summary.txt", cdhf::summary_text(s));
        report.write("summary.csv", cdhf::summary_csv(s));
        report.finalize();
        return 0;
    }

    if (sum->parsed()) {
        require_file(sum_in, "telemetry");
        auto s = cdhf::summarize(cdhf::parse_log_file(sum_in));
        std::cout << cdhf::summary_text(s);
        if (!sum_out.empty()) {
            cdhf::ReportWriter report(sum_out);
            report.write("summary.txt", cdhf::summary_text(s));
            report.write("summary.csv", cdhf::summary_csv(s));
            report.finalize();
        }
        return 0;
    }

    if (spl->parsed()) {
        require_file(spl_in, "telemetry");
        cdhf::SplitSpec spec;
        spec.mode = spl_mode == "by_session" ? cdhf::SplitMode::BySession
                                             : cdhf::SplitMode::ByProgrammer;
        if (spl_mode != "by_session" && spl_mode != "by_programmer")
            throw std::runtime_error("unknown split mode: " + spl_mode);
        spec.seed = cdhf::rng::substream(seed, "split");
        auto store = cdhf::parse_log_file(spl_in);
        auto parts = cdhf::split_dataset(store, spec);
        fs::create_directories(spl_out);
        cdhf::write_log_file(parts.train, (fs::path(spl_out) / "train.jsonl").string());
        cdhf::write_log_file(parts.val, (fs::path(spl_out) / "val.jsonl").string());
        cdhf::write_log_file(parts.test, (fs::path(spl_out) / "test.jsonl").string());
        return 0;
    }

    if (trn->parsed()) {
        require_file(trn_train, "training partition");
        auto store = cdhf::parse_log_file(trn_train);
        auto schema = cdhf::make_schema(trn_stage);
        auto ds = cdhf::build_dataset(store, schema);
        cdhf::AcceptanceModel model = [&] {
            if (trn_model == "logistic") {
                logit_params.seed = cdhf::rng::substream(seed, "train-logistic");
                return cdhf::train_logistic(ds, schema, logit_params);
            }
            if (trn_model != "tree")
                throw std::runtime_error("unknown model kind: " + trn_model);
            tree_params.seed = cdhf::rng::substream(seed, "train-tree");
            return cdhf::train_tree_ensemble(ds, schema, tree_params);
        }();
        if (!fs::path(trn_out).parent_path().empty())
            fs::create_directories(fs::path(trn_out).parent_path());
        model.save(trn_out);
        std::cout << "trained " << trn_model << " stage-" << trn_stage << " model on "
                  << ds.size() << " rows -> " << trn_out << '\n';
        return 0;
    }

    if (evl->parsed()) {
        require_file(evl_test, "test partition");
        auto m1 = cdhf::AcceptanceModel::load(evl_m1);
        auto m2 = cdhf::AcceptanceModel::load(evl_m2);
        auto store = cdhf::parse_log_file(evl_test);
        auto scored = score_store(store, m1, m2);

        cdhf::ReportWriter report(evl_out);
        auto rep1 = cdhf::classification_report(scored.stage1, scored.labels);
        auto rep2 = cdhf::classification_report(scored.stage2, scored.labels);
        report.write("stage1_metrics.csv", cdhf::metrics_csv(rep1));
        report.write("stage2_metrics.csv", cdhf::metrics_csv(rep2));
        report.write("stage1_metrics.txt", cdhf::metrics_text(rep1));
        report.write("stage2_metrics.txt", cdhf::metrics_text(rep2));
        report.write("stage1_selective.csv",
                     cdhf::selective_csv(cdhf::selective_prediction_curve(scored.stage1,
                                                                          scored.labels)));
        report.write("stage2_selective.csv",
                     cdhf::selective_csv(cdhf::selective_prediction_curve(scored.stage2,
                                                                          scored.labels)));
        if (m2.kind() == cdhf::ModelKind::TreeEnsemble) {
            auto imp = m2.feature_importance();
            std::ostringstream out;
            out << "feature,split_count\n";
            for (const auto& e : imp.entries) out << e.name << ',' << e.split_count << '\n';
            report.write("stage2_feature_importance.csv", out.str());
        }
        if (!evl_thresholds.empty()) {
            auto th = load_thresholds(evl_thresholds);
            auto op = cdhf::retrospective_policy_eval(th, store, m1, m2);
            report.write("operating_point.csv", cdhf::operating_point_csv(op));
            report.write("operating_point.txt", cdhf::operating_point_text(op));
            std::cout << cdhf::operating_point_text(op);
        }
        if (evl_time_regression) {
            auto r =
                cdhf::verification_time_regression(store, cdhf::rng::substream(seed, "vtr"));
            std::ostringstream out;
            out.precision(17);
            out << "r2_model,r2_median_baseline,n_rows\n"
                << r.r2_model << ',' << r.r2_median_baseline << ',' << r.n_rows << '\n';
            report.write("time_regression.csv", out.str());
            std::cout << "verification-time regression R^2: " << r.r2_model
                      << " (median baseline " << r.r2_median_baseline << ")\n";
        }
        report.finalize();
        std::cout << "stage-1 AU-ROC " << rep1.auroc << ", stage-2 AU-ROC " << rep2.auroc
                  << '\n';
        return 0;
    }

    if (swp->parsed()) {
        require_file(swp_test, "test partition");
        auto m1 = cdhf::AcceptanceModel::load(swp_m1);
        auto m2 = cdhf::AcceptanceModel::load(swp_m2);
        auto store = cdhf::parse_log_file(swp_test);
        auto scored = score_store(store, m1, m2);
        auto curve = cdhf::sweep_thresholds(scored.stage1, scored.stage2, scored.labels,
                                            swp_grid);
        cdhf::ReportWriter report(swp_out);
        report.write("tradeoff.csv", cdhf::tradeoff_csv(curve));
        report.finalize();
        std::cout << "swept " << curve.points.size() << " grid points\n";
        return 0;
    }

    if (sel->parsed()) {
        require_file(sel_val, "validation partition");
        auto m1 = cdhf::AcceptanceModel::load(sel_m1);
        auto m2 = cdhf::AcceptanceModel::load(sel_m2);
        auto store = cdhf::parse_log_file(sel_val);
        auto scored = score_store(store, m1, m2);
        auto pick = cdhf::select_thresholds(scored.stage1, scored.stage2, scored.labels,
                                            sel_target);
        json j;
        j["v1"] = pick.thresholds.v1;
        j["v2"] = pick.thresholds.v2;
        j["feasible"] = pick.feasible;
        j["hidden_fraction"] = pick.hidden_fraction;
        j["stage1_hidden_fraction"] = pick.stage1_hidden_fraction;
        j["stage1_precision"] = pick.stage1_precision;
        j["stage2_precision"] = pick.stage2_precision;
        j["overall_precision"] = pick.overall_precision;
        j["target"] = sel_target;
        if (!fs::path(sel_out).parent_path().empty())
            fs::create_directories(fs::path(sel_out).parent_path());
        std::ofstream out(sel_out, std::ios::binary);
        out << j.dump(2) << '\n';
        std::cout << j.dump(2) << '\n';
        return 0;
    }

    if (dec->parsed()) {
        require_file(dec_in, "telemetry");
        auto m1 = cdhf::AcceptanceModel::load(dec_m1);
        auto m2 = cdhf::AcceptanceModel::load(dec_m2);
        cdhf::PolicyThresholds th;
        if (!dec_thresholds.empty()) th = load_thresholds(dec_thresholds);
        if (dec_v1 >= 0) th.v1 = dec_v1;
        if (dec_v2 >= 0) th.v2 = dec_v2;
        th.validate();
        auto store = cdhf::parse_log_file(dec_in);

        fs::create_directories(dec_out);
        std::ofstream audit(fs::path(dec_out) / "decisions.jsonl", std::ios::binary);
        std::size_t provider_calls = 0;
        for (const auto& session : store.sessions) {
            const auto& ev = session.events;
            for (std::size_t i = 0; i < ev.size(); ++i) {
                if (ev[i].action != cdhf::ActionKind::Shown) continue;
                auto t0 = std::chrono::steady_clock::now();
                double provider_ms = 0.0;
                auto d = cdhf::decide(m1, m2, th, ev[i],
                                      std::span<const cdhf::TelemetryEvent>(ev.data(), i),
                                      [&] {
                                          ++provider_calls;
                                          auto t1 = std::chrono::steady_clock::now();
                                          provider_ms =
                                              std::chrono::duration<double, std::milli>(
                                                  t1 - t0)
                                                  .count();
                                          return ev[i];
                                      });
                json j;
                j["event_id"] = ev[i].event_id;
                j["stage1_prob"] = d.stage1_prob;
                if (d.stage2_prob) j["stage2_prob"] = *d.stage2_prob;
                j["decision"] = d.outcome == cdhf::DisplayOutcome::HiddenStage1
                                    ? "hidden_stage1"
                                    : d.outcome == cdhf::DisplayOutcome::HiddenStage2
                                          ? "hidden_stage2"
                                          : "shown";
                j["provider_latency_ms"] = provider_ms;
                audit << j.dump() << '\n';
            }
        }
        std::cout << "provider calls: " << provider_calls << '\n';
        return 0;
    }

    if (vp->parsed()) {
        auto profile = profile_by_name(vp_profile);
        std::vector<double> grid;
        for (int i = 0; i < vp_grid; ++i)
            grid.push_back(static_cast<double>(i) / (vp_grid - 1));
        auto report = cdhf::verify_proposition1(profile, grid, vp_samples,
                                                cdhf::rng::substream(seed, "prop1"));
        std::cout << "P* = " << report.pstar << "\n";
        std::cout << "p,delta_closed_form,delta_monte_carlo,stderr,agreement\n";
        for (const auto& r : report.rows)
            std::cout << r.p << ',' << r.delta_closed_form << ',' << r.delta_monte_carlo
                      << ',' << r.combined_stderr << ',' << (r.agreement ? "true" : "false")
                      << '\n';
        std::cout << (report.all_agree ? "all grid rows agree\n"
                                       : "DISAGREEMENT detected\n");
        return report.all_agree ? 0 : 1;
    }

    if (sc->parsed()) {
        require_file(sc_train, "training partition");
        require_file(sc_test, "test partition");
        auto schema = cdhf::make_schema(2);
        auto train_ds = cdhf::build_dataset(cdhf::parse_log_file(sc_train), schema);
        auto test_ds = cdhf::build_dataset(cdhf::parse_log_file(sc_test), schema);
        std::vector<double> fractions;
        std::stringstream ss(sc_fractions);
        std::string item;
        while (std::getline(ss, item, ',')) fractions.push_back(std::stod(item));
        cdhf::TreeEnsembleParams params;
        params.seed = cdhf::rng::substream(seed, "sample-complexity");
        auto curve = cdhf::sample_complexity_curve(
            fractions, train_ds, test_ds, schema, params,
            cdhf::rng::substream(seed, "sample-complexity-subsample"));
        cdhf::ReportWriter report(sc_out);
        report.write("sample_complexity.csv", cdhf::sample_complexity_csv(curve));
        report.finalize();
        for (const auto& p : curve)
            std::cout << p.fraction << (p.skipped ? " skipped" : " auroc " +
                                                                     std::to_string(p.auroc))
                      << '\n';
        return 0;
    }

    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const cdhf::TelemetryError& e) {
        std::cerr << "telemetry: " << e.what() << '\n';
    } catch (const cdhf::SimulatorError& e) {
        std::cerr << "simulator: " << e.what() << '\n';
    } catch (const cdhf::FeatureError& e) {
        std::cerr << "features: " << e.what() << '\n';
    } catch (const cdhf::ModelError& e) {
        std::cerr << "models: " << e.what() << '\n';
    } catch (const cdhf::MetricError& e) {
        std::cerr << "metrics: " << e.what() << '\n';
    } catch (const cdhf::PolicyError& e) {
        std::cerr << "policy: " << e.what() << '\n';
    } catch (const cdhf::EvalError& e) {
        std::cerr << "eval: " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
    }
    return 1;
}
