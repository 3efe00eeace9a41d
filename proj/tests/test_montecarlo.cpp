#include <doctest.h>

#include <cmath>
#include <random>

#include "lre/montecarlo.hpp"
#include "oracles.hpp"

using namespace lre;

namespace {

DesignConfig small_config() {
  DesignConfig c;
  c.n = 300;
  c.dim_z = 40;
  c.delta_support = 10;
  c.theta_support = 40;
  return c;
}

}  // namespace

TEST_CASE("design patterns") {
  DesignConfig c;
  const Vector th = c.theta();
  CHECK(th(0) == 1.0);
  CHECK(th(1) == 0.25);
  CHECK(th(4) == doctest::Approx(0.04));
  CHECK(th(5) == doctest::Approx(0.1 / 36.0));
  CHECK(th(299) == doctest::Approx(0.1 / 90000.0));
  CHECK(th(300) == 0.0);
  const Vector de = c.delta();
  CHECK(de(0) == 1.0);
  CHECK(de(99) == doctest::Approx(0.01));
  CHECK(de(100) == 0.0);
  CHECK(c.population_r2() > 0.0);
  CHECK(c.population_r2() < 1.0);

  DesignConfig bad = c;
  bad.d = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = c;
  bad.rho = 1.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("gen_design structure") {
  DesignConfig c = small_config();
  RngStream a(1), b(1);
  const Dataset x = gen_design(c, a);
  const Dataset y = gen_design(c, b);
  CHECK(x.y_o == y.y_o);
  CHECK(x.z == y.z);
  CHECK(x.x == x.z.leftCols(c.d));
  CHECK(x.y_o == x.d.cwiseProduct(*x.y_star));
  x.validate();

  c.c = 0.0;
  c.noise_sd = 0.0;
  RngStream r(2);
  const Dataset exact = gen_design(c, r);
  Vector expect = Vector::Zero(c.n);
  for (Index j = 1; j < c.d; ++j) expect += exact.z.col(j - 1) / static_cast<double>(j * j);
  CHECK((*exact.y_star - expect).cwiseAbs().maxCoeff() < 1e-12);

  DesignConfig flat = small_config();
  flat.n = 20000;
  flat.rho = 0.0;
  flat.delta_scale = 0.0;
  RngStream f(3);
  const Dataset half = gen_design(flat, f);
  CHECK(std::abs(half.d.mean() - 0.5) < 4.0 * 0.5 / std::sqrt(20000.0));

  DesignConfig all = small_config();
  all.force_present = true;
  RngStream g(4);
  CHECK(gen_design(all, g).d.isOnes());
}

TEST_CASE("presence rate matches an integration oracle") {
  DesignConfig c;
  c.n = 100000;
  c.dim_z = 120;
  RngStream rng(5);
  const Dataset data = gen_design(c, rng);

  // Z'delta ~ N(0, delta' T delta); integrate L over it by plain sampling.
  const Vector de = c.delta();
  long double var = 0.0L;
  for (Index j = 0; j < c.dim_z; ++j)
    for (Index k = 0; k < c.dim_z; ++k) var += de(j) * de(k) * std::pow(0.5L, std::abs(j - k));
  std::mt19937_64 eng(99);
  std::normal_distribution<double> nd(0.0, std::sqrt(static_cast<double>(var)));
  long double acc = 0.0L;
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i) acc += 1.0L / (1.0L + std::exp(-static_cast<long double>(nd(eng))));
  CHECK(std::abs(data.d.mean() - static_cast<double>(acc / draws)) < 0.005);
}

TEST_CASE("true_blp closed-form cases") {
  DesignConfig c;
  c.c = 0.0;
  const Vector b = true_blp(c);
  const Vector th = c.theta();
  CHECK((b - th.head(c.d)).cwiseAbs().maxCoeff() < 1e-12);

  DesignConfig o;
  o.rho = 0.0;
  CHECK((true_blp(o) - o.theta().head(o.d)).cwiseAbs().maxCoeff() < 1e-14);

  const Vector bi = true_blp(o, true);
  CHECK(bi.size() == o.d + 1);
  CHECK(bi(0) == 0.0);
}

TEST_CASE("true_blp matches a simulated regression") {
  DesignConfig c;
  c.dim_z = 40;
  c.theta_support = 40;
  c.c = 5.0;
  const Vector th = c.theta();
  const Index d = c.d, p = c.dim_z, n = 1000000;
  const double rho = c.rho, innov = std::sqrt(1 - rho * rho);

  std::mt19937_64 eng(2024);
  std::normal_distribution<double> nd;
  oracle::LMat xx(d, oracle::LVec(d, 0.0L));
  oracle::LVec xy(d, 0.0L);
  std::vector<double> z(p);
  std::vector<double> g(static_cast<std::size_t>(n));
  std::vector<double> xs(static_cast<std::size_t>(n * d));
  for (Index i = 0; i < n; ++i) {
    z[0] = nd(eng);
    for (Index j = 1; j < p; ++j) z[j] = rho * z[j - 1] + innov * nd(eng);
    double gi = 0.0;
    for (Index j = 0; j < p; ++j) gi += z[j] * th(j);
    g[i] = gi;
    for (Index a = 0; a < d; ++a) {
      xs[i * d + a] = z[a];
      xy[a] += z[a] * gi;
      for (Index b = 0; b < d; ++b) xx[a][b] += z[a] * z[b];
    }
  }
  const auto beta = oracle::gj_solve(xx, xy);
  // sandwich standard errors of the simulated regression
  oracle::LMat meat(d, oracle::LVec(d, 0.0L));
  for (Index i = 0; i < n; ++i) {
    long double r = g[i];
    for (Index a = 0; a < d; ++a) r -= xs[i * d + a] * beta[a];
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b) meat[a][b] += xs[i * d + a] * xs[i * d + b] * r * r;
  }
  const auto inv = oracle::gj_inverse(xx);
  const auto cov = oracle::matmul(inv, oracle::matmul(meat, inv));
  const Vector b0 = true_blp(c);
  for (Index a = 0; a < d; ++a) {
    const double se = std::sqrt(static_cast<double>(cov[a][a]));
    CHECK(std::abs(b0(a) - static_cast<double>(beta[a])) < 3.0 * se);
  }
}

TEST_CASE("weighted least squares with sandwich covariance") {
  RngStream rng(6);
  const Index n = 80;
  Matrix p(n, 2);
  Vector y(n), w(n);
  for (Index i = 0; i < n; ++i) {
    p(i, 0) = 1.0;
    p(i, 1) = rng.normal();
    y(i) = 1.0 + 2.0 * p(i, 1) + rng.normal();
    w(i) = rng.uniform() < 0.3 ? 0.0 : 1.0 / (0.2 + rng.uniform());
  }
  const WeightedLs f = weighted_ls(p, y, w);
  const auto ref = oracle::weighted_normal_equations(oracle::to_lmat(p), oracle::to_lvec(y), oracle::to_lvec(w));
  CHECK(std::abs(f.beta(0) - static_cast<double>(ref[0])) < 1e-10);
  CHECK(std::abs(f.beta(1) - static_cast<double>(ref[1])) < 1e-10);
  CHECK((f.cov - f.cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.cov(0, 0) > 0.0);
}

TEST_CASE("summary identities and reproducibility") {
  const DesignConfig c = small_config();
  const RngStream rng(7);
  const McSummary a = run_mc(c, 8, 0.05, 3, rng);
  const McSummary b = run_mc(c, 8, 0.05, 3, rng);
  const McSummary s = run_mc_serial(c, 8, 0.05, 3, rng);
  CHECK(a.beta0 == true_blp(c));
  REQUIRE(a.estimators.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a.estimators[k].estimates == b.estimators[k].estimates);
    CHECK(a.estimators[k].estimates == s.estimators[k].estimates);
    const auto& e = a.estimators[k];
    for (Index j = 0; j < e.bias.size(); ++j) {
      CHECK(e.rmse(j) * e.rmse(j) == doctest::Approx(e.bias(j) * e.bias(j) + e.sd(j) * e.sd(j)).epsilon(1e-10));
      CHECK(e.rejection(j) >= 0.0);
      CHECK(e.rejection(j) <= 1.0);
      CHECK(e.mean_se(j) > 0.0);
    }
  }
  CHECK(a.get(Estimator::lre).estimator == Estimator::lre);
  McOptions only;
  only.estimators = {Estimator::ols};
  const McSummary o = run_mc(c, 2, 0.05, 3, rng, only);
  CHECK_THROWS_AS(o.get(Estimator::ipw), InputError);
  CHECK_THROWS_AS(run_mc(c, 1, 0.05, 3, rng), InputError);
}

TEST_CASE("fully observed data make the estimators coincide") {
  DesignConfig c = small_config();
  c.force_present = true;
  const McSummary s = run_mc(c, 5, 0.05, 5, RngStream(8));
  const Matrix& ols = s.get(Estimator::ols).estimates;
  CHECK((s.get(Estimator::ipw).estimates - ols).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((s.get(Estimator::lre).estimates - ols).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(s.failures == 0);
}

TEST_CASE("exact nuisances give correctly sized tests") {
  DesignConfig c;
  c.n = 500;
  c.dim_z = 30;
  c.c = 0.0;  // g exactly linear in X
  c.theta_support = 30;
  c.delta_support = 10;
  McOptions opt;
  opt.learner = exact_nuisance_learner(c);
  opt.estimators = {Estimator::lre};
  const int reps = 400;
  const McSummary s = run_mc(c, reps, 0.05, 5, RngStream(9), opt);
  // binomial(400, 0.05) 99% band
  const double half = 2.576 * std::sqrt(0.05 * 0.95 / reps);
  const auto& lre = s.get(Estimator::lre);
  for (Index j = 0; j < c.d; ++j) {
    CHECK(std::abs(lre.bias(j)) < 4.0 * lre.sd(j) / std::sqrt(static_cast<double>(reps)));
    CHECK(std::abs(lre.rejection(j) - 0.05) <= half + 1e-12);
  }
}
