#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "lre/crossfit.hpp"
#include "lre/dataset.hpp"

namespace lre {

/// Sparse high-dimensional missing-outcome design:
///   Z ~ N(0, T(rho)),  D ~ Bernoulli(L(Z'delta)),  Y* = Z'theta + eps,  Y^o = D Y*,
///   X = first d columns of Z,
/// with delta_j = 1/j for j <= delta_support, theta_j = 1/j^2 for j < d,
/// c/j^2 for d <= j <= theta_support, zero beyond (1-based j).
struct DesignConfig {
  Index n = 500;
  Index dim_z = 500;
  double rho = 0.5;
  double c = 0.1;
  Index d = 6;
  Index delta_support = 100;
  Index theta_support = 300;
  double delta_scale = 1.0;   // 0 gives D ~ Bernoulli(1/2)
  double noise_sd = 1.0;
  bool force_present = false;  // D = 1 for every row

  /// Throws InputError on an inconsistent design.
  void validate() const;
  Vector delta() const;
  Vector theta() const;
  /// Var(Z'theta) / (Var(Z'theta) + noise variance).
  double population_r2() const;
};

/// Design with the sample and the latent outcome in y_star.
Dataset gen_design(const DesignConfig& config, RngStream& rng);

/// Best linear predictor of g(X) = E[Z'theta | X] on p(x) = x (optionally
/// with a leading intercept), from the Gaussian moments of T(rho).
Vector true_blp(const DesignConfig& config, bool intercept = false);

/// mu(z) = z'theta and s(z) = L(z'delta) of the design.
std::shared_ptr<NuisanceLearner> exact_nuisance_learner(const DesignConfig& config);

enum class Estimator { ols, ipw, lre };
std::string_view to_string(Estimator e);

struct EstimatorSummary {
  Estimator estimator{};
  Vector bias, sd, rmse, rejection, mean_se;
  Matrix estimates;  // R x d, replication order
};

struct McSummary {
  DesignConfig config;
  int reps = 0;
  double alpha = 0.05;
  int folds = 5;
  Vector beta0;
  int failures = 0;  // replications redrawn after a first-stage or identification failure
  std::vector<EstimatorSummary> estimators;

  const EstimatorSummary& get(Estimator e) const;
};

struct McOptions {
  std::set<Estimator> estimators{Estimator::ols, Estimator::ipw, Estimator::lre};
  FirstStageConfig first_stage;
  /// Overrides the penalized first stage (e.g. exact nuisances).
  std::shared_ptr<NuisanceLearner> learner;
  int max_attempts = 20;
};

/// Per replication: draw the design, cross-fit mu and s, then
///   OLS = (E_N D p p')^{-1} E_N D p Y^o
///   IPW = (E_N D/s p p')^{-1} E_N D/s p Y^o
///   LRE = series OLS of the cross-fitted robust signal
/// and a two-sided t-test of beta_j = beta0_j with each estimator's
/// heteroskedasticity-robust sandwich variance. Replication r draws from
/// rng.substream(r), so the summary is independent of scheduling.
McSummary run_mc(const DesignConfig& config, int reps, double alpha, int folds,
                 const RngStream& rng, const McOptions& options = {});
McSummary run_mc_serial(const DesignConfig& config, int reps, double alpha, int folds,
                        const RngStream& rng, const McOptions& options = {});

/// Weighted least squares with sandwich covariance
/// G^{-1} E_N[w^2 e^2 p p'] G^{-1} / N, G = E_N w p p'.
struct WeightedLs {
  Vector beta;
  Matrix cov;
};
WeightedLs weighted_ls(const Matrix& p, const Vector& y, const Vector& w);

}  // namespace lre
