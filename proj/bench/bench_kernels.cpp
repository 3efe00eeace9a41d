// Serial reference vs OpenMP kernel timings.
//   lre_bench [repeats]
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "lre/crossfit.hpp"
#include "lre/lre.hpp"
#include "lre/montecarlo.hpp"

using namespace lre;

namespace {

double best_of(int repeats, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-24s serial %9.4f s   parallel %9.4f s   speedup %5.2fx   %s\n", name, serial, parallel,
              serial / parallel, same ? "match" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 3;
  std::printf("threads: %d\n", omp_get_max_threads());

  {
    RngStream rng(1);
    Vector u(20000);
    for (Index i = 0; i < u.size(); ++i) u(i) = rng.normal();
    const double h = silverman_bandwidth(u);
    Vector a, b;
    const double ts = best_of(repeats, [&] { a = kde_at_samples_serial(u, h); });
    const double tp = best_of(repeats, [&] { b = kde_at_samples(u, h); });
    report("kde pilot (n=20000)", ts, tp, ((a - b).array().abs() <= 1e-12 * a.array()).all());
  }

  {
    RngStream rng(2);
    const Index n = 2000;
    Matrix x(n, 1);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
      x(i, 0) = rng.uniform() * 4.0 - 2.0;
      y(i) = std::sin(x(i, 0)) + rng.normal();
    }
    const DesignMatrix p = design_matrix(x, BasisSpec::polynomial(3));
    const LREFit fit = fit_lre_full(p, y);
    Matrix grid(50, 1);
    for (Index i = 0; i < 50; ++i) grid(i, 0) = -2.0 + 4.0 * i / 49.0;
    Matrix gb(grid.rows(), fit.beta.size());
    Vector e(grid.rows());
    for (Index i = 0; i < grid.rows(); ++i) {
      gb.row(i) = eval_basis(std::span<const double>(&grid(i, 0), 1), fit.spec).transpose();
      e(i) = fit.scale_at(std::span<const double>(&grid(i, 0), 1));
    }
    BandOptions opt;
    opt.draws = 1000;
    const RngStream brng(3);
    std::vector<double> a, b;
    const double ts = best_of(repeats, [&] { a = bootstrap_sup_t_serial(p, y, fit.beta, gb, e, opt, brng); });
    const double tp = best_of(repeats, [&] { b = bootstrap_sup_t(p, y, fit.beta, gb, e, opt, brng); });
    report("bootstrap (B=1000)", ts, tp, a == b);
  }

  {
    DesignConfig c;
    c.dim_z = 200;
    RngStream rng(4);
    const Dataset data = gen_design(c, rng);
    RngStream frng(5);
    const FoldAssignment folds = make_folds(data.size(), 5, frng);
    const PenalizedLearner learner(SignalKind::robust_missing, FirstStageConfig{});
    CrossFitResult a, b;
    const double ts = best_of(repeats, [&] { a = crossfit_signals_serial(data, folds, SignalKind::robust_missing, learner); });
    const double tp = best_of(repeats, [&] { b = crossfit_signals(data, folds, SignalKind::robust_missing, learner); });
    report("crossfit (K=5)", ts, tp, a.y_hat == b.y_hat);
  }

  {
    DesignConfig c;
    c.dim_z = 100;
    const RngStream rng(6);
    McSummary a, b;
    const double ts = best_of(1, [&] { a = run_mc_serial(c, 16, 0.05, 5, rng); });
    const double tp = best_of(1, [&] { b = run_mc(c, 16, 0.05, 5, rng); });
    bool same = true;
    for (std::size_t k = 0; k < a.estimators.size(); ++k)
      same = same && a.estimators[k].estimates == b.estimators[k].estimates;
    report("monte carlo (R=16)", ts, tp, same);
  }
  return 0;
}
