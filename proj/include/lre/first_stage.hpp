#pragma once

#include <optional>
#include <vector>

#include "lre/numerics.hpp"

namespace lre {

/// 1.1 sqrt(N) Phi^{-1}(1 - 0.05 / max(N, p log N)).
double default_penalty(Index n, Index p);

struct LassoOptions {
  bool fit_intercept = true;
  bool standardize = true;
  double tolerance = 1e-7;  // max standardized coefficient change per sweep
  int max_sweeps = 10000;
  bool record_objective = false;
};

/// Weighted L1-penalized least squares
///   sum_i w_i (y_i - b0 - z_i' theta)^2 + lambda ||theta_std||_1,
/// where theta_std are the coefficients on columns scaled to unit weighted
/// standard deviation. The intercept b0 is never penalized. Coefficients are
/// reported on the original column scale.
struct LassoFit {
  Vector coef;
  double intercept = 0.0;
  double lambda = 0.0;
  Vector center;
  Vector scale;
  std::string selection;  // which rows carried weight, for reports
  int sweeps = 0;
  bool converged = false;
  std::vector<double> objective_trace;
  bool post_selection = false;  // coefficients refitted by post_lasso

  double predict(const Eigen::Ref<const Vector>& z) const { return intercept + z.dot(coef); }
  Vector predict_rows(const Matrix& z) const;
  Index nonzeros() const;
};

/// Penalty level at and above which every penalized coefficient is zero.
double lasso_lambda_max(const Matrix& z, const Vector& y, const Vector& weights,
                        const LassoOptions& opt = {});

/// Cyclic coordinate descent. Throws InputError when no weight is positive.
/// Non-convergence within max_sweeps leaves converged == false.
LassoFit lasso_fit(const Matrix& z, const Vector& y, const Vector& weights, double lambda,
                   const LassoOptions& opt = {});

struct LogisticOptions {
  bool fit_intercept = true;
  bool standardize = true;
  double trim_floor = 0.02;       // s-bar; predictions are floored at s-bar / 2
  double rel_tolerance = 1e-9;    // relative objective decrease
  double coef_tolerance = 1e-10;  // max standardized coefficient change
  int max_iterations = 5000;
  bool record_objective = false;
};

/// L1-penalized logistic regression
///   sum_i [log(1 + exp(eta_i)) - d_i eta_i] + lambda ||delta_std||_1,
/// eta_i = b0 + z_i' delta, fitted by proximal gradient with backtracking.
struct PropensityFit {
  Vector coef;
  double intercept = 0.0;
  double lambda = 0.0;
  double trim_floor = 0.02;
  Vector center;
  Vector scale;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
  bool post_selection = false;  // coefficients refitted by post_logistic

  double index(const Eigen::Ref<const Vector>& z) const { return intercept + z.dot(coef); }
  Index nonzeros() const;
};

/// Throws DegenerateFitError when d holds a single class.
PropensityFit logistic_lasso_fit(const Matrix& z, const Vector& d, double lambda,
                                 const LogisticOptions& opt = {});

/// Unpenalized least squares on the columns a lasso fit selected (same row
/// weights, intercept if the fit had one). Returns `fit` unchanged when the
/// support is empty or the refit is not identified.
LassoFit post_lasso(const LassoFit& fit, const Matrix& z, const Vector& y, const Vector& weights,
                    const LassoOptions& opt = {});
/// Unpenalized logistic MLE (Newton) on the selected columns. Falls back to
/// `fit` when the support is empty or the refit diverges under separation.
PropensityFit post_logistic(const PropensityFit& fit, const Matrix& z, const Vector& d,
                            const LogisticOptions& opt = {});

/// max(s-bar / 2, L(z' delta)), capped strictly below one.
double predict_propensity(const PropensityFit& fit, const Eigen::Ref<const Vector>& z);
/// Same trimming applied to a raw linear index.
double trim_propensity(double index, double trim_floor);

/// Gaussian-kernel density of residuals with per-point bandwidths.
struct DensityScoreFit {
  Vector residuals;
  Vector bandwidths;
  double global_bandwidth = 0.0;
  bool adaptive = false;
  std::optional<LassoFit> location;  // l(x, z) = E[W | X, Z] when fitted by the CAPD stage

  double density(double u) const;
  double log_density(double u) const;
};

/// Silverman rule 0.9 min(sd, IQR / 1.34) n^{-1/5}.
double silverman_bandwidth(const Vector& u);

/// Kernel density fit. With adaptive = true the Silverman pilot bandwidth is
/// rescaled per point by (pilot(u_i) / g)^{-1/2}, g the geometric mean of the
/// pilot densities at the sample (Abramson's square-root law).
/// `bandwidth` overrides the Silverman pilot. Throws DegenerateFitError on
/// zero-variance residuals, InputError when n < 10 and no bandwidth is forced.
DensityScoreFit fit_density_score(const Vector& residuals, bool adaptive,
                                  std::optional<double> bandwidth = std::nullopt);

/// phi'(u) / phi(u) of the kernel mixture. Throws DomainError when the
/// density at u is below 1e-300.
double eval_log_density_derivative(const DensityScoreFit& fit, double u);

/// Pilot density at every sample point. The serial reference sums every
/// pair; the OpenMP kernel used by fit_density_score sorts the sample and
/// skips pairs further apart than 10 h (relative difference below 1e-20).
Vector kde_at_samples_serial(const Vector& u, double h);
Vector kde_at_samples(const Vector& u, double h);

}  // namespace lre
