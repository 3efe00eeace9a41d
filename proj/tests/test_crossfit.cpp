#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numeric>
#include <set>

#include "lre/crossfit.hpp"
#include "lre/montecarlo.hpp"

using namespace lre;

namespace {

Dataset small_design(Index n, Index p, std::uint64_t seed) {
  DesignConfig c;
  c.n = n;
  c.dim_z = p;
  c.d = std::min<Index>(3, p);
  c.delta_support = std::min<Index>(5, p);
  c.theta_support = p;
  RngStream rng(seed);
  return gen_design(c, rng);
}

// Records the training-set size it sees and returns mu = size, s = 1.
class CountingLearner final : public NuisanceLearner {
 public:
  mutable std::atomic<int> calls{0};
  std::shared_ptr<const NuisanceBundle> fit(const Dataset& train) const override {
    ++calls;
    const double n = static_cast<double>(train.size());
    FixedLearner inner([n](const Dataset&, const std::vector<Index>& rows) {
      auto e = NuisanceEvaluations::sized(static_cast<Index>(rows.size()));
      e.mu.setConstant(n);
      e.s.setOnes();
      return e;
    });
    return inner.fit(train);
  }
};

}  // namespace

TEST_CASE("fold assignment") {
  RngStream rng(1);
  const FoldAssignment f = make_folds(6, 2, rng);
  CHECK(f.fold_sizes() == std::vector<Index>{3, 3});

  const FoldAssignment loo = make_folds(7, 7, rng);
  for (Index s : loo.fold_sizes()) CHECK(s == 1);

  const FoldAssignment u = make_folds(103, 5, rng);
  CHECK(u.fold_sizes() == std::vector<Index>{21, 21, 21, 20, 20});
  for (int k = 0; k < 5; ++k) {
    auto in = u.rows_in(k), out = u.rows_outside(k);
    CHECK(in.size() + out.size() == 103);
    std::set<Index> all(in.begin(), in.end());
    all.insert(out.begin(), out.end());
    CHECK(all.size() == 103);
  }

  RngStream a(9), b(9);
  CHECK(make_folds(50, 5, a).fold == make_folds(50, 5, b).fold);

  CHECK_THROWS_AS(make_folds(10, 1, rng), InputError);
  CHECK_THROWS_AS(make_folds(3, 4, rng), InputError);
}

TEST_CASE("forced nuisances give D * Y") {
  const Dataset data = small_design(120, 10, 2);
  RngStream rng(3);
  const FoldAssignment folds = make_folds(data.size(), 5, rng);
  FirstStageConfig cfg;
  cfg.force_mu = 0.0;
  cfg.force_s = 1.0;
  const PenalizedLearner learner(SignalKind::robust_missing, cfg);
  const CrossFitResult r = crossfit_signals(data, folds, SignalKind::robust_missing, learner);
  CHECK(r.y_hat == data.d.cwiseProduct(data.y_o));
}

TEST_CASE("each fold is fitted on its complement") {
  const Dataset data = small_design(53, 4, 4);
  RngStream rng(5);
  const FoldAssignment folds = make_folds(data.size(), 4, rng);
  CountingLearner learner;
  const CrossFitResult r = crossfit_signals(data, folds, SignalKind::robust_missing, learner);
  CHECK(learner.calls == 4);
  const auto sizes = folds.fold_sizes();
  for (Index i = 0; i < data.size(); ++i)
    CHECK(r.eval.mu(i) == static_cast<double>(data.size() - sizes[folds.fold[i]]));
}

TEST_CASE("out-of-fold values do not depend on the fold's own rows") {
  Dataset data = small_design(300, 15, 6);
  RngStream rng(7);
  const FoldAssignment folds = make_folds(data.size(), 3, rng);
  const PenalizedLearner learner(SignalKind::robust_missing, FirstStageConfig{});
  const CrossFitResult base = crossfit_signals(data, folds, SignalKind::robust_missing, learner);

  Dataset changed = data;
  for (Index i : folds.rows_in(0)) changed.y_o(i) = changed.d(i) * (changed.y_o(i) + 7.0);
  const CrossFitResult r = crossfit_signals(changed, folds, SignalKind::robust_missing, learner);
  bool others_moved = false;
  for (Index i = 0; i < data.size(); ++i) {
    if (folds.fold[i] == 0) {
      CHECK(r.eval.mu(i) == base.eval.mu(i));
      CHECK(r.eval.s(i) == base.eval.s(i));
    } else {
      others_moved = others_moved || r.eval.mu(i) != base.eval.mu(i);
    }
  }
  CHECK(others_moved);
}

TEST_CASE("serial and parallel cross-fitting agree") {
  const Dataset data = small_design(400, 40, 8);
  RngStream rng(9);
  const FoldAssignment folds = make_folds(data.size(), 5, rng);
  for (auto kind : {SignalKind::robust_missing, SignalKind::ipw_missing}) {
    const PenalizedLearner learner(kind, FirstStageConfig{});
    const CrossFitResult a = crossfit_signals_serial(data, folds, kind, learner);
    const CrossFitResult b = crossfit_signals(data, folds, kind, learner);
    CHECK(a.y_hat == b.y_hat);
  }
}

TEST_CASE("single-class fold complement names the fold") {
  Dataset data = small_design(40, 3, 10);
  data.d.setOnes();
  data.d(0) = 0.0;
  data.y_o = data.d.cwiseProduct(*data.y_star);
  RngStream rng(11);
  const FoldAssignment folds = make_folds(data.size(), 40, rng);
  const PenalizedLearner learner(SignalKind::robust_missing, FirstStageConfig{});
  try {
    crossfit_signals(data, folds, SignalKind::robust_missing, learner);
    FAIL("expected DegenerateFitError");
  } catch (const DegenerateFitError& e) {
    CHECK(std::string(e.what()).find("fold " + std::to_string(folds.fold[0])) != std::string::npos);
  }
}

TEST_CASE("fold count does not shift the signal mean") {
  const Dataset data = small_design(4000, 20, 12);
  const PenalizedLearner learner(SignalKind::robust_missing, FirstStageConfig{});
  RngStream r2(13), r5(14);
  const Vector a = crossfit_signals(data, make_folds(data.size(), 2, r2), SignalKind::robust_missing, learner).y_hat;
  const Vector b = crossfit_signals(data, make_folds(data.size(), 5, r5), SignalKind::robust_missing, learner).y_hat;
  const double n = static_cast<double>(data.size());
  const Vector diff = a - b;
  const double se = std::sqrt((diff.array() - diff.mean()).square().sum() / (n - 1) / n);
  CHECK(std::abs(diff.mean()) < 3.0 * se + 1e-12);
}

TEST_CASE("other signal kinds run end to end") {
  RngStream rng(15);
  const Index n = 600, p = 6;
  Dataset data;
  data.z = Matrix(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) data.z(i, j) = rng.normal();
  data.x = data.z.leftCols(1);
  data.d.resize(n);
  data.y_o.resize(n);
  data.t = Vector(n);
  data.w = Vector(n);
  for (Index i = 0; i < n; ++i) {
    data.d(i) = rng.bernoulli(logistic(0.5 * data.z(i, 1))) ? 1 : 0;
    (*data.t)(i) = rng.bernoulli(0.5) ? 1 : 0;
    (*data.w)(i) = 0.5 * data.z(i, 0) + rng.normal();
    data.y_o(i) = data.z(i, 0) + (*data.w)(i) * (1.0 + data.z(i, 0)) + rng.normal();
  }
  const FoldAssignment folds = make_folds(n, 5, rng);
  for (auto kind : {SignalKind::robust_cate, SignalKind::robust_cate_missing, SignalKind::robust_capd,
                    SignalKind::ipw_cate}) {
    const PenalizedLearner learner(kind, FirstStageConfig{});
    const CrossFitResult r = crossfit_signals(data, folds, kind, learner);
    CHECK(r.y_hat.allFinite());
    CHECK(r.bundles.size() == 5);
  }

  // CAPD: the average partial derivative of y in w is 1 + E[z0] = 1
  const PenalizedLearner capd(SignalKind::robust_capd, FirstStageConfig{});
  const CrossFitResult r = crossfit_signals(data, folds, SignalKind::robust_capd, capd);
  CHECK(std::abs(r.y_hat.mean() - 1.0) < 0.25);

  Dataset no_t = data;
  no_t.t.reset();
  const PenalizedLearner cm(SignalKind::robust_cate_missing, FirstStageConfig{});
  CHECK_THROWS_AS(crossfit_signals(no_t, folds, SignalKind::robust_cate_missing, cm), InputError);
}

TEST_CASE("capd features") {
  const Vector x = (Vector(2) << 2.0, 3.0).finished();
  const Vector z = (Vector(1) << 5.0).finished();
  const Vector f = capd_features(0.5, x, z);
  const Vector expect = (Vector(7) << 0.5, 0.25, 2.0, 3.0, 5.0, 1.0, 1.5).finished();
  CHECK(f == expect);
}
