#include <doctest.h>

#include <cmath>
#include <set>

#include "lre/numerics.hpp"
#include "oracles.hpp"

using namespace lre;

namespace {

Matrix random_spd(Index d, RngStream& rng) {
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

}  // namespace

TEST_CASE("rng streams are reproducible and substreams differ") {
  RngStream a(42, 3), b(42, 3), c(42, 4);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
  CHECK(a.normal() != c.normal());
  CHECK(RngStream(1).substream(5).uniform() == RngStream(1).substream(5).uniform());
  CHECK(RngStream(1).substream(5).uniform() != RngStream(1).substream(6).uniform());
}

TEST_CASE("rng moments") {
  RngStream rng(7);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, se = 0;
  for (int i = 0; i < n; ++i) {
    su += rng.uniform();
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    se += rng.exponential();
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(se / n == doctest::Approx(1.0).epsilon(0.02));
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(rng.below(10));
  CHECK(seen.size() == 10);
  CHECK(*seen.rbegin() == 9);
}

TEST_CASE("normal_quantile examples") {
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.95996398).epsilon(1e-8));
  for (double u : {std::ldexp(1.0, -40), 0.125, 0.25, 0.375})
    CHECK(std::abs(normal_quantile(u) + normal_quantile(1.0 - u)) < 1e-12 * std::max(1.0, std::abs(normal_quantile(u))));
  CHECK_THROWS_AS(normal_quantile(0.0), DomainError);
  CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
  CHECK_THROWS_AS(normal_quantile(std::nan("")), DomainError);
}

TEST_CASE("normal_quantile against high-precision oracle") {
  double worst = 0.0;
  for (int k = 1; k < 2000; ++k) {
    const double u = k / 2000.0;
    worst = std::max(worst, std::abs(normal_quantile(u) - static_cast<double>(oracle::quantile_hp(u))));
  }
  for (int k = 1; k <= 300; ++k) {
    const double u = std::pow(10.0, -k);
    worst = std::max(worst, std::abs(normal_quantile(u) - static_cast<double>(oracle::quantile_hp(u))));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("normal cdf and pdf") {
  for (double x : {-30.0, -8.0, -2.0, -0.3, 0.0, 1.0, 5.0}) {
    const double ref = static_cast<double>(oracle::phi_cdf_hp(x));
    CHECK(std::abs(normal_cdf(x) - ref) <= 1e-12 * ref + 1e-300);
  }
  CHECK(normal_pdf(0.0) == doctest::Approx(0.3989422804014327));
  CHECK(logistic(0.0) == 0.5);
  CHECK(logistic(1.0) == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(logistic(-800.0) >= 0.0);
  CHECK(logistic(800.0) == 1.0);
}

TEST_CASE("solve_spd") {
  CHECK(solve_spd(SymmetricMatrix::identity(3), Vector(Vector::LinSpaced(3, 1, 3))) == Vector::LinSpaced(3, 1, 3));
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 4;
  const Vector x = solve_spd(SymmetricMatrix(d), Vector((Vector(2) << 2, 8).finished()));
  CHECK(x(0) == doctest::Approx(1.0));
  CHECK(x(1) == doctest::Approx(2.0));

  RngStream rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_spd(10, rng);
    Vector b(10);
    for (Index i = 0; i < 10; ++i) b(i) = rng.normal();
    const Vector got = solve_spd(SymmetricMatrix(a), b);
    const auto ref = oracle::gj_solve(oracle::to_lmat(a), oracle::to_lvec(b));
    double err = 0, scale = 0;
    for (Index i = 0; i < 10; ++i) {
      err = std::max(err, std::abs(got(i) - static_cast<double>(ref[i])));
      scale = std::max(scale, std::abs(static_cast<double>(ref[i])));
    }
    CHECK(err < 1e-9 * scale);
  }
}

TEST_CASE("solve_spd rejects singular and indefinite matrices") {
  Matrix a = Matrix::Ones(3, 3);
  CHECK_THROWS_AS(solve_spd(SymmetricMatrix(a), Vector(Vector::Ones(3))), SingularityError);
  a = Matrix::Identity(2, 2);
  a(1, 1) = -1;
  try {
    solve_spd(SymmetricMatrix(a), Vector(Vector::Ones(2)));
    FAIL("expected SingularityError");
  } catch (const SingularityError& e) {
    CHECK(e.min_eigenvalue() == doctest::Approx(-1.0));
  }
}

TEST_CASE("symmetric matrix mirrors the upper triangle") {
  Matrix a(2, 2);
  a << 1, 2, 5, 3;
  const SymmetricMatrix s(a);
  CHECK(s(1, 0) == 2.0);
  CHECK(s.is_psd() == false);
  CHECK(SymmetricMatrix::identity(4).is_psd());
}

TEST_CASE("eigenvalues against Jacobi oracle") {
  CHECK(min_eigenvalue(SymmetricMatrix::identity(3)) == doctest::Approx(1.0));
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 5, 0.1, 3;
  CHECK(min_eigenvalue(SymmetricMatrix(d)) == doctest::Approx(0.1));
  CHECK(max_eigenvalue(SymmetricMatrix(d)) == doctest::Approx(5.0));

  RngStream rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    Matrix a(6, 6);
    for (Index i = 0; i < 6; ++i)
      for (Index j = i; j < 6; ++j) a(i, j) = a(j, i) = rng.normal();
    const auto ev = oracle::jacobi_eigenvalues(oracle::to_lmat(a));
    long double lo = ev[0], hi = ev[0];
    for (auto v : ev) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(min_eigenvalue(SymmetricMatrix(a)) == doctest::Approx(static_cast<double>(lo)).epsilon(1e-10));
    CHECK(max_eigenvalue(SymmetricMatrix(a)) == doctest::Approx(static_cast<double>(hi)).epsilon(1e-10));
  }
}

TEST_CASE("toeplitz") {
  const Matrix t = toeplitz_ar1(3, 0.5);
  Matrix ref(3, 3);
  ref << 1, .5, .25, .5, 1, .5, .25, .5, 1;
  CHECK((t - ref).cwiseAbs().maxCoeff() == 0.0);

  RngStream a(9), b(9);
  CHECK(toeplitz_gaussian(50, 4, 0.3, a) == toeplitz_gaussian(50, 4, 0.3, b));

  RngStream rng(10);
  const Index n = 200000;
  const Matrix z = toeplitz_gaussian(n, 5, 0.5, rng);
  const Matrix cov = z.transpose() * z / static_cast<double>(n);
  CHECK((cov - toeplitz_ar1(5, 0.5)).cwiseAbs().maxCoeff() < 0.01);

  const Matrix w = toeplitz_gaussian(n, 3, 0.0, rng);
  const Matrix c0 = w.transpose() * w / static_cast<double>(n);
  CHECK((c0 - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 5.0 / std::sqrt(static_cast<double>(n)));
}
