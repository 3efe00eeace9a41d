#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "lre/basis.hpp"

namespace lre {

/// Second-stage fit: series least squares of the signal on p(X) with the
/// sandwich covariance Omega = Q^{-1} E_N[p p' (Yhat - p'beta)^2] Q^{-1}.
struct LREFit {
  Vector beta;
  SymmetricMatrix q;
  SymmetricMatrix omega;
  Index n = 0;
  BasisSpec spec;

  double predict(std::span<const double> x) const;
  /// sqrt(p(x)' Omega p(x)), not divided by sqrt(N).
  double scale_at(std::span<const double> x) const;
};

/// beta = (E_N p p')^{-1} E_N p Yhat. Throws SingularityError when Q fails
/// the positive-definiteness check (basis not identified on the sample).
Vector fit_lre(const DesignMatrix& p, const Vector& y_hat);

SymmetricMatrix estimate_omega(const DesignMatrix& p, const Vector& y_hat, const Vector& beta);

/// beta, Q and Omega in one pass.
LREFit fit_lre_full(const DesignMatrix& p, const Vector& y_hat);

struct Interval {
  double lo;
  double center;
  double hi;
};

/// center = p(x0)' beta, halfwidth = z_{1-alpha/2} sqrt(p' Omega p / N).
Interval pointwise_interval(const LREFit& fit, std::span<const double> x0, double alpha);

/// Weighted least squares (E_N h p p')^{-1} E_N h p Yhat.
/// Throws SingularityError when the weighted Gram matrix is singular.
Vector bootstrap_draw(const DesignMatrix& p, const Vector& y_hat, const Vector& weights);

/// Fills `weights` for one bootstrap draw. The default draws i.i.d.
/// standard exponentials.
using WeightSampler = std::function<void(RngStream&, Vector&)>;

struct BandOptions {
  int draws = 200;
  double alpha = 0.05;
  WeightSampler sampler;  // empty: standard exponential
  int max_retries = 10;   // per draw, on a singular weighted Gram matrix
};

struct BandResult {
  Matrix grid;  // one row per evaluation point
  Vector g_hat;
  Vector e_hat;  // sqrt(p' Omega p)
  Vector pw_lo, pw_hi;
  Vector unif_lo, unif_hi;
  double t_star = 0.0;
  double z_crit = 0.0;
  int draws = 0;
  double alpha = 0.0;
  Index n = 0;
  int retries = 0;
  std::vector<double> t_stats;  // sorted sup-t statistics, one per draw
};

/// Sup-t statistic sup_x |p(x)'(beta_b - beta)| / e_hat(x) of each draw.
/// Draw b uses rng.substream(b), so serial and parallel runs agree exactly.
std::vector<double> bootstrap_sup_t(const DesignMatrix& p, const Vector& y_hat, const Vector& beta,
                                    const Matrix& grid_basis, const Vector& e_hat,
                                    const BandOptions& opt, const RngStream& rng, int* retries = nullptr);
std::vector<double> bootstrap_sup_t_serial(const DesignMatrix& p, const Vector& y_hat,
                                           const Vector& beta, const Matrix& grid_basis,
                                           const Vector& e_hat, const BandOptions& opt,
                                           const RngStream& rng, int* retries = nullptr);

/// t* is the ceil((1 - alpha) B)-th order statistic of the draws; the
/// uniform band is g_hat +- e_hat t*, the pointwise band
/// g_hat +- z_{1-alpha/2} e_hat / sqrt(N).
/// Throws DomainError when e_hat vanishes at a grid point.
BandResult uniform_band(const LREFit& fit, const DesignMatrix& p, const Vector& y_hat,
                        const Matrix& grid, const BandOptions& opt, const RngStream& rng);

/// Critical value from already-sorted sup-t draws.
double bootstrap_critical_value(const std::vector<double>& sorted_t, double alpha);

struct Diagnostics {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double condition_number = 0.0;
  bool singular = false;
  double xi = 0.0;  // grid sup of ||p(x)||
  std::optional<double> trim_binding_fraction;
};

/// Eigenvalue report for Q; flags singularity at the solve_spd threshold.
Diagnostics diagnostics(const LREFit& fit, const Matrix& grid,
                        std::optional<double> trim_binding_fraction = std::nullopt);
Diagnostics gram_diagnostics(const SymmetricMatrix& q);

}  // namespace lre
