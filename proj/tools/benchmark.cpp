// Compares the OpenMP kernels against their serial reference
// implementations and reports speedups. Results must agree bitwise.

#include <chrono>
#include <cstdio>
#include <vector>

#include "cdhf/eval.hpp"
#include "cdhf/rng.hpp"
#include "cdhf/simulator.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <class F>
double time_best_of(int reps, const F& f) {
    double best = 1e30;
    for (int i = 0; i < reps; ++i) {
        double t0 = now_s();
        f();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled; parallel kernels run serially\n");
#endif

    auto profile = cdhf::ProgrammerProfile::defaults();

    {
        const std::size_t n = 4'000'000;
        cdhf::MonteCarloEstimate par{}, ser{};
        double tp = time_best_of(
            3, [&] { par = cdhf::monte_carlo_time(profile, 0.4, true, true, n, 99); });
        double ts = time_best_of(
            3, [&] { ser = cdhf::monte_carlo_time_serial(profile, 0.4, true, true, n, 99); });
        bool same = par.mean == ser.mean && par.stderr_ == ser.stderr_;
        std::printf("monte_carlo_time      n=%zu  parallel %.3fs  serial %.3fs  "
                    "speedup %.2fx  bitwise-equal %s\n",
                    n, tp, ts, ts / tp, same ? "yes" : "NO");
    }

    {
        const std::size_t n = 400'000;
        std::vector<double> s1(n), s2(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            s1[i] = cdhf::rng::uniform01(1, i);
            s2[i] = cdhf::rng::uniform01(2, i);
            labels[i] = cdhf::rng::uniform01(3, i) < 0.5 ? 1 : 0;
        }
        cdhf::TradeoffCurve curve;
        double tp = time_best_of(3, [&] {
            curve = cdhf::sweep_thresholds(s1, s2, labels, 200);
        });
        std::printf("sweep_thresholds      n=%zu grid=200  %.3fs  (%zu points)\n", n, tp,
                    curve.points.size());
    }

    {
        cdhf::SimulationConfig cfg;
        cfg.n_programmers = 32;
        cfg.sessions_per_programmer = 8;
        cfg.events_per_session = 120;
        cfg.seed = 7;
        cdhf::CohortResult r;
        double tp = time_best_of(
            3, [&] { r = cdhf::simulate_cohort(cfg, cdhf::ProgrammerProfile::default_cohort()); });
        std::printf("simulate_cohort       programmers=%d  %.3fs  (%zu events)\n",
                    cfg.n_programmers, tp, r.store.event_count());
    }

    return 0;
}
