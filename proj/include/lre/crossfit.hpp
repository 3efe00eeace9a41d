#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "lre/dataset.hpp"
#include "lre/first_stage.hpp"
#include "lre/signals.hpp"

namespace lre {

struct FoldAssignment {
  std::vector<int> fold;  // fold index of each observation
  int k = 0;

  Index size() const { return static_cast<Index>(fold.size()); }
  std::vector<Index> rows_in(int f) const;
  std::vector<Index> rows_outside(int f) const;
  std::vector<Index> fold_sizes() const;
};

/// Uniformly random balanced partition: shuffle, then deal rows round-robin,
/// so the first N mod K folds get one extra row. Throws InputError unless
/// 2 <= K <= N.
FoldAssignment make_folds(Index n, int k, RngStream& rng);

/// Settings of the built-in penalized first stage.
struct FirstStageConfig {
  std::optional<double> lambda;  // nullopt: default_penalty(n, p) per fit
  double trim_floor = 0.02;
  bool adaptive_kde = true;
  bool post_selection = true;  // refit without penalty on the selected columns
  // Test hooks: replace the fitted regression / propensities by constants.
  std::optional<double> force_mu;
  std::optional<double> force_s;
  LassoOptions lasso;
  LogisticOptions logistic;
};

/// Fitted nuisance functions for one fold complement.
class NuisanceBundle {
 public:
  virtual ~NuisanceBundle() = default;
  /// Nuisance values at data rows `rows`, in that order.
  virtual NuisanceEvaluations evaluate(const Dataset& data, const std::vector<Index>& rows) const = 0;
};

/// First-stage estimator: data from a fold complement in, bundle out.
class NuisanceLearner {
 public:
  virtual ~NuisanceLearner() = default;
  virtual std::shared_ptr<const NuisanceBundle> fit(const Dataset& train) const = 0;
};

/// Lasso / logistic-lasso / kernel-density first stage for every signal kind.
///
///   missing kinds:   mu  = lasso of y_o on Z over D = 1 rows; s = logistic lasso of D on Z
///   CATE kinds:      mu1, mu0 = lasso of y_o on Z over D = 1 / D = 0 rows;
///                    s trimmed on both sides
///   CATE + missing:  mu1, mu0 over D = 1 rows with T = 1 / T = 0;
///                    s = logistic lasso of D on (Z, T); h = logistic lasso of T on Z
///   CAPD:            mu = lasso of y_o on (w, w^2, X, Z, w X), dmu its w-derivative;
///                    l = lasso of w on (X, Z); dlogf = kernel score of w - l
struct PenalizedBundle final : NuisanceBundle {
  SignalKind kind{};
  FirstStageConfig config;
  std::optional<LassoFit> mu, mu1, mu0, location;
  std::optional<PropensityFit> s, h;
  std::optional<DensityScoreFit> density;

  NuisanceEvaluations evaluate(const Dataset& data, const std::vector<Index>& rows) const override;
};

class PenalizedLearner final : public NuisanceLearner {
 public:
  PenalizedLearner(SignalKind kind, FirstStageConfig config) : kind_(kind), config_(std::move(config)) {}
  std::shared_ptr<const NuisanceBundle> fit(const Dataset& train) const override;
  std::shared_ptr<const PenalizedBundle> fit_penalized(const Dataset& train) const;

 private:
  SignalKind kind_;
  FirstStageConfig config_;
};

/// Known nuisance functions (simulation designs with exact nuisances).
class FixedLearner final : public NuisanceLearner {
 public:
  using Evaluator = std::function<NuisanceEvaluations(const Dataset&, const std::vector<Index>&)>;
  explicit FixedLearner(Evaluator f) : f_(std::move(f)) {}
  std::shared_ptr<const NuisanceBundle> fit(const Dataset& train) const override;

 private:
  Evaluator f_;
};

/// CAPD regression features (w, w^2, X, Z, w X) for one row.
Vector capd_features(double w, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z);

struct CrossFitResult {
  Vector y_hat;
  NuisanceEvaluations eval;  // out-of-fold nuisance values, original row order
  std::vector<std::shared_ptr<const NuisanceBundle>> bundles;
  FoldAssignment folds;
  double trim_binding_fraction = 0.0;  // share of rows whose propensity sits on the floor
};

/// Fits the learner on each fold complement, evaluates it on the fold and
/// builds the signals. Folds run in parallel (OpenMP); the result does not
/// depend on scheduling. Fit failures are rethrown naming the fold.
CrossFitResult crossfit_signals(const Dataset& data, const FoldAssignment& folds, SignalKind kind,
                                const NuisanceLearner& learner);
/// Same computation, one fold after another.
CrossFitResult crossfit_signals_serial(const Dataset& data, const FoldAssignment& folds,
                                       SignalKind kind, const NuisanceLearner& learner);

}  // namespace lre
