#include "lre/montecarlo.hpp"

#include <cmath>
#include <exception>
#include <sstream>

#include "lre/basis.hpp"
#include "lre/lre.hpp"

namespace lre {

void DesignConfig::validate() const {
  auto fail = [](const std::string& m) { throw InputError("design: " + m); };
  if (n < 2) fail("N must be >= 2");
  if (dim_z < 1) fail("dimZ must be >= 1");
  if (d < 1 || d > dim_z) fail("need 1 <= d <= dimZ");
  if (!(std::abs(rho) < 1.0)) fail("|rho| must be < 1");
  if (delta_support < 0 || theta_support < 0) fail("pattern supports must be >= 0");
  if (!(noise_sd >= 0.0)) fail("noise sd must be >= 0");
  if (!std::isfinite(c) || !std::isfinite(delta_scale)) fail("non-finite design constant");
}

Vector DesignConfig::delta() const {
  Vector v = Vector::Zero(dim_z);
  for (Index j = 1; j <= std::min(delta_support, dim_z); ++j) v(j - 1) = delta_scale / static_cast<double>(j);
  return v;
}

Vector DesignConfig::theta() const {
  Vector v = Vector::Zero(dim_z);
  for (Index j = 1; j <= std::min(theta_support, dim_z); ++j) {
    const double base = 1.0 / static_cast<double>(j * j);
    v(j - 1) = j < d ? base : c * base;
  }
  return v;
}

double DesignConfig::population_r2() const {
  const Vector th = theta();
  const double signal = th.dot(toeplitz_ar1(dim_z, rho) * th);
  const double total = signal + noise_sd * noise_sd;
  return total > 0.0 ? signal / total : 0.0;
}

Dataset gen_design(const DesignConfig& config, RngStream& rng) {
  config.validate();
  Dataset data;
  data.z = toeplitz_gaussian(config.n, config.dim_z, config.rho, rng);
  const Vector idx_s = data.z * config.delta();
  const Vector y_star = data.z * config.theta();
  data.y_star = Vector(config.n);
  data.d = Vector(config.n);
  data.y_o = Vector(config.n);
  for (Index i = 0; i < config.n; ++i) {
    const double y = y_star(i) + config.noise_sd * rng.normal();
    const double present = config.force_present ? 1.0 : (rng.bernoulli(logistic(idx_s(i))) ? 1.0 : 0.0);
    (*data.y_star)(i) = y;
    data.d(i) = present;
    data.y_o(i) = present * y;
  }
  data.x = data.z.leftCols(config.d);
  return data;
}

Vector true_blp(const DesignConfig& config, bool intercept) {
  config.validate();
  const Matrix t = toeplitz_ar1(config.dim_z, config.rho);
  const Index d = config.d;
  const SymmetricMatrix sxx(t.topLeftCorner(d, d));
  const Vector sxy = t.topRows(d) * config.theta();
  const Vector slope = solve_spd(sxx, sxy);
  if (!intercept) return slope;
  // E X = 0 and E Y* = 0, so the intercept of the projection is zero.
  Vector out(d + 1);
  out << 0.0, slope;
  return out;
}

namespace {

class ExactBundle final : public NuisanceBundle {
 public:
  ExactBundle(Vector theta, Vector delta, bool present) : theta_(std::move(theta)), delta_(std::move(delta)), present_(present) {}
  NuisanceEvaluations evaluate(const Dataset& data, const std::vector<Index>& rows) const override {
    NuisanceEvaluations e = NuisanceEvaluations::sized(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto z = data.z.row(rows[r]);
      e.mu(r) = z.dot(theta_);
      e.s(r) = present_ ? 1.0 : logistic(z.dot(delta_));
    }
    return e;
  }

 private:
  Vector theta_, delta_;
  bool present_;
};

class ExactLearner final : public NuisanceLearner {
 public:
  explicit ExactLearner(const DesignConfig& c)
      : bundle_(std::make_shared<ExactBundle>(c.theta(), c.delta(), c.force_present)) {}
  std::shared_ptr<const NuisanceBundle> fit(const Dataset&) const override { return bundle_; }

 private:
  std::shared_ptr<const ExactBundle> bundle_;
};

}  // namespace

std::shared_ptr<NuisanceLearner> exact_nuisance_learner(const DesignConfig& config) {
  return std::make_shared<ExactLearner>(config);
}

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::ols: return "OLS";
    case Estimator::ipw: return "IPW";
    case Estimator::lre: return "LRE";
  }
  return "unknown";
}

const EstimatorSummary& McSummary::get(Estimator e) const {
  for (const auto& s : estimators)
    if (s.estimator == e) return s;
  throw InputError("Monte Carlo summary has no " + std::string(to_string(e)) + " results");
}

WeightedLs weighted_ls(const Matrix& p, const Vector& y, const Vector& w) {
  const double n = static_cast<double>(p.rows());
  const Index d = p.cols();
  Matrix g = Matrix::Zero(d, d);
  g.selfadjointView<Eigen::Upper>().rankUpdate((w.cwiseSqrt().asDiagonal() * p).transpose(), 1.0 / n);
  const SymmetricMatrix gram(std::move(g));
  WeightedLs out;
  out.beta = solve_spd(gram, Vector(p.transpose() * w.cwiseProduct(y) / n));
  const Vector score = w.cwiseProduct(y - p * out.beta);
  Matrix meat = Matrix::Zero(d, d);
  meat.selfadjointView<Eigen::Upper>().rankUpdate((score.asDiagonal() * p).transpose(), 1.0 / n);
  const Matrix meat_full = SymmetricMatrix(std::move(meat)).matrix();
  const Matrix half = solve_spd(gram, meat_full);
  out.cov = SymmetricMatrix(solve_spd(gram, Matrix(half.transpose()))).matrix() / n;
  return out;
}

namespace {

struct RepResult {
  std::vector<Vector> estimate;  // indexed like the estimator list
  std::vector<Vector> se;
  int failures = 0;
};

RepResult run_rep(const DesignConfig& config, int folds, const RngStream& rep_rng,
                  const std::vector<Estimator>& est, const McOptions& opt,
                  const NuisanceLearner& learner) {
  const BasisSpec spec = BasisSpec::polynomial(1, static_cast<int>(config.d), false);
  RepResult out;
  for (int attempt = 0;; ++attempt) {
    const RngStream stream = rep_rng.substream(static_cast<std::uint64_t>(attempt));
    try {
      RngStream data_rng = stream.substream(0);
      RngStream fold_rng = stream.substream(1);
      const Dataset data = gen_design(config, data_rng);
      const FoldAssignment fa = make_folds(data.size(), folds, fold_rng);
      const CrossFitResult cf = crossfit_signals_serial(data, fa, SignalKind::robust_missing, learner);
      const DesignMatrix p = design_matrix(data.x, spec);

      out.estimate.clear();
      out.se.clear();
      for (Estimator e : est) {
        WeightedLs fit;
        if (e == Estimator::lre) {
          const LREFit lf = fit_lre_full(p, cf.y_hat);
          fit.beta = lf.beta;
          fit.cov = lf.omega.matrix() / static_cast<double>(lf.n);
        } else {
          Vector w = data.d;
          if (e == Estimator::ipw) w = data.d.cwiseQuotient(cf.eval.s);
          fit = weighted_ls(p.values, data.y_o, w);
        }
        out.estimate.push_back(fit.beta);
        out.se.push_back(fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt());
      }
      return out;
    } catch (const DegenerateFitError&) {
      if (attempt + 1 >= opt.max_attempts) throw;
    } catch (const SingularityError&) {
      if (attempt + 1 >= opt.max_attempts) throw;
    }
    ++out.failures;
  }
}

McSummary summarize(const DesignConfig& config, int reps, double alpha, int folds,
                    const std::vector<Estimator>& est, const std::vector<RepResult>& results) {
  McSummary s;
  s.config = config;
  s.reps = reps;
  s.alpha = alpha;
  s.folds = folds;
  s.beta0 = true_blp(config);
  const Index d = s.beta0.size();
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double r = static_cast<double>(reps);
  for (const auto& res : results) s.failures += res.failures;

  for (std::size_t k = 0; k < est.size(); ++k) {
    EstimatorSummary e;
    e.estimator = est[k];
    e.estimates.resize(reps, d);
    Vector reject = Vector::Zero(d), se_sum = Vector::Zero(d);
    for (int i = 0; i < reps; ++i) {
      const Vector& b = results[i].estimate[k];
      const Vector& se = results[i].se[k];
      e.estimates.row(i) = b.transpose();
      se_sum += se;
      for (Index j = 0; j < d; ++j)
        if (std::abs(b(j) - s.beta0(j)) > z * se(j)) reject(j) += 1.0;
    }
    const Vector mean = e.estimates.colwise().mean().transpose();
    e.bias = mean - s.beta0;
    e.sd.resize(d);
    e.rmse.resize(d);
    for (Index j = 0; j < d; ++j) {
      const auto dev = e.estimates.col(j).array() - mean(j);
      e.sd(j) = std::sqrt(dev.square().sum() / r);
      e.rmse(j) = std::sqrt((e.estimates.col(j).array() - s.beta0(j)).square().sum() / r);
    }
    e.rejection = reject / r;
    e.mean_se = se_sum / r;
    s.estimators.push_back(std::move(e));
  }
  return s;
}

void check_mc_args(const DesignConfig& config, int reps, double alpha, int folds) {
  config.validate();
  if (reps < 2) throw InputError("Monte Carlo: need at least 2 replications");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("Monte Carlo: alpha must lie in (0, 1)");
  if (folds < 2 || folds > config.n) throw InputError("Monte Carlo: need 2 <= K <= N");
}

std::shared_ptr<NuisanceLearner> learner_for(const DesignConfig& config, const McOptions& opt) {
  if (opt.learner) return opt.learner;
  FirstStageConfig fs = opt.first_stage;
  // Every outcome observed: the presence propensity is known to be one.
  if (config.force_present && !fs.force_s) fs.force_s = 1.0;
  return std::make_shared<PenalizedLearner>(SignalKind::robust_missing, fs);
}

}  // namespace

McSummary run_mc_serial(const DesignConfig& config, int reps, double alpha, int folds,
                        const RngStream& rng, const McOptions& options) {
  check_mc_args(config, reps, alpha, folds);
  const std::vector<Estimator> est(options.estimators.begin(), options.estimators.end());
  const auto learner = learner_for(config, options);
  std::vector<RepResult> results;
  for (int r = 0; r < reps; ++r)
    results.push_back(run_rep(config, folds, rng.substream(static_cast<std::uint64_t>(r)), est, options, *learner));
  return summarize(config, reps, alpha, folds, est, results);
}

McSummary run_mc(const DesignConfig& config, int reps, double alpha, int folds,
                 const RngStream& rng, const McOptions& options) {
  check_mc_args(config, reps, alpha, folds);
  const std::vector<Estimator> est(options.estimators.begin(), options.estimators.end());
  const auto learner = learner_for(config, options);
  std::vector<RepResult> results(static_cast<std::size_t>(reps));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(reps));
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < reps; ++r) {
    try {
      results[r] = run_rep(config, folds, rng.substream(static_cast<std::uint64_t>(r)), est, options, *learner);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return summarize(config, reps, alpha, folds, est, results);
}

}  // namespace lre
