#include "lre/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace lre {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t engine_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(engine_seed(seed, stream)) {}

RngStream RngStream::substream(std::uint64_t key) const {
  return RngStream(seed_, splitmix64(stream_ * 0xd1342543de82ef95ULL + key + 1));
}

double RngStream::uniform() {
  // (k + 0.5) / 2^53 never hits 0 or 1.
  const std::uint64_t k = engine_() >> 11;
  return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double RngStream::exponential() { return -std::log(uniform()); }

std::uint64_t RngStream::below(std::uint64_t n) {
  // Rejection to avoid modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

SymmetricMatrix::SymmetricMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw InputError("SymmetricMatrix: matrix is not square");
  m_.triangularView<Eigen::StrictlyLower>() = m_.transpose().triangularView<Eigen::StrictlyLower>();
}

bool SymmetricMatrix::is_psd(double rel_tol) const {
  if (dim() == 0) return true;
  const double scale = std::max(1.0, std::abs(m_.trace()));
  return min_eigenvalue(*this) >= -rel_tol * scale;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

namespace {

// Lower-tail quantile, u in (0, 0.5].
double lower_quantile(double u) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double kLow = 0.02425;

  double x;
  if (u < kLow) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  // Newton step on Phi(x) - u. In the lower half erfc keeps full relative
  // precision, so the correction is accurate deep into the tail.
  const double pdf = normal_pdf(x);
  if (pdf > 0.0) x -= (normal_cdf(x) - u) / pdf;
  return x;
}

}  // namespace

double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) {
    std::ostringstream os;
    os << "normal_quantile: probability " << u << " outside (0, 1)";
    throw DomainError(os.str());
  }
  if (u == 0.5) return 0.0;
  // 1 - u is exact for u >= 0.5, so the upper half reuses the lower tail.
  return u < 0.5 ? lower_quantile(u) : -lower_quantile(1.0 - u);
}

double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

namespace {

void check_spd(const SymmetricMatrix& a) {
  const Matrix& m = a.matrix();
  if (!m.allFinite()) throw InputError("solve_spd: matrix has non-finite entries");
  const double max_diag = m.diagonal().cwiseAbs().maxCoeff();
  const double min_eig = min_eigenvalue(a);
  if (!(min_eig >= 1e-10 * max_diag) || max_diag == 0.0) {
    std::ostringstream os;
    os << "matrix is singular or not positive definite (min eigenvalue " << min_eig
       << ", max diagonal " << max_diag << ")";
    throw SingularityError(os.str(), min_eig);
  }
}

}  // namespace

Matrix solve_spd(const SymmetricMatrix& a, const Matrix& b) {
  if (a.dim() != b.rows()) throw InputError("solve_spd: dimension mismatch");
  check_spd(a);
  Eigen::LLT<Matrix> llt(a.matrix());
  if (llt.info() != Eigen::Success)
    throw SingularityError("solve_spd: Cholesky factorization failed", min_eigenvalue(a));
  return llt.solve(b);
}

Vector solve_spd(const SymmetricMatrix& a, const Vector& b) {
  return solve_spd(a, Matrix(b)).col(0);
}

namespace {

Vector eigenvalues(const SymmetricMatrix& a) {
  if (!a.matrix().allFinite()) throw InputError("eigenvalue: matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.matrix(), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace

double min_eigenvalue(const SymmetricMatrix& a) {
  if (a.dim() == 0) throw InputError("min_eigenvalue: empty matrix");
  return eigenvalues(a).minCoeff();
}

double max_eigenvalue(const SymmetricMatrix& a) {
  if (a.dim() == 0) throw InputError("max_eigenvalue: empty matrix");
  return eigenvalues(a).maxCoeff();
}

Matrix toeplitz_ar1(Index dim, double rho) {
  Matrix t(dim, dim);
  for (Index j = 0; j < dim; ++j)
    for (Index k = 0; k < dim; ++k) t(j, k) = std::pow(rho, static_cast<double>(std::abs(j - k)));
  return t;
}

Matrix toeplitz_gaussian(Index n, Index dim, double rho, RngStream& rng) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("toeplitz_gaussian: |rho| must be < 1");
  if (n < 0 || dim < 1) throw InputError("toeplitz_gaussian: bad shape");
  const double innov = std::sqrt(1.0 - rho * rho);
  Matrix z(n, dim);
  for (Index i = 0; i < n; ++i) {
    double prev = rng.normal();
    z(i, 0) = prev;
    for (Index j = 1; j < dim; ++j) {
      prev = rho * prev + innov * rng.normal();
      z(i, j) = prev;
    }
  }
  return z;
}

}  // namespace lre
