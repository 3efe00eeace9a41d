#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "lre/error.hpp"

namespace lre {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Seeded pseudo-random stream. A (seed, stream id) pair fully determines
/// the draw sequence; substreams are derived by hashing so that replications
/// and bootstrap draws can be generated in any order.
///
/// Gaussian draws use the polar Box-Muller transform on our own uniform
/// generator so that sequences are identical across standard libraries.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  /// Independent child stream keyed by `key`.
  RngStream substream(std::uint64_t key) const;

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  double normal();
  /// Standard exponential.
  double exponential();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Dense symmetric matrix. The lower triangle is mirrored from the upper
/// one on construction, so symmetry holds exactly.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(Matrix m);
  static SymmetricMatrix identity(Index d) { return SymmetricMatrix(Matrix::Identity(d, d)); }

  Index dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

  /// Cholesky succeeds and the smallest eigenvalue is >= -tol * trace.
  bool is_psd(double rel_tol = 1e-10) const;

 private:
  Matrix m_;
};

double normal_cdf(double x);
double normal_pdf(double x);

/// Inverse standard normal CDF. Acklam's rational approximation followed by
/// one Newton step against an erfc-based CDF; absolute error well below 1e-8.
/// Throws DomainError for u outside (0, 1).
double normal_quantile(double u);

/// Logistic function exp(t) / (1 + exp(t)), evaluated without overflow.
double logistic(double t);

/// Solves A X = B for symmetric positive definite A.
/// Throws SingularityError when the smallest eigenvalue of A falls below
/// 1e-10 times its largest diagonal entry.
Matrix solve_spd(const SymmetricMatrix& a, const Matrix& b);
Vector solve_spd(const SymmetricMatrix& a, const Vector& b);

double min_eigenvalue(const SymmetricMatrix& a);
double max_eigenvalue(const SymmetricMatrix& a);

/// T(rho) with entries rho^|j-k|.
Matrix toeplitz_ar1(Index dim, double rho);

/// n i.i.d. rows from N(0, T(rho)) generated by the stationary AR(1)
/// recursion z_j = rho z_{j-1} + sqrt(1 - rho^2) e_j.
Matrix toeplitz_gaussian(Index n, Index dim, double rho, RngStream& rng);

}  // namespace lre
