#include "lre/first_stage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace lre {

double default_penalty(Index n, Index p) {
  if (n < 2 || p < 1) throw InputError("default_penalty: need N >= 2 and p >= 1");
  const double nn = static_cast<double>(n);
  const double denom = std::max(nn, static_cast<double>(p) * std::log(nn));
  return 1.1 * std::sqrt(nn) * normal_quantile(1.0 - 0.05 / denom);
}

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// Rows with positive weight, standardized. Shared by both penalized fits.
struct Standardized {
  std::vector<Index> rows;
  Matrix z;      // m x p, centered/scaled
  Vector y;      // m
  Vector w;      // m
  Vector center;  // p
  Vector scale;   // p (0 for constant columns)
  double weight_sum = 0.0;
};

Standardized standardize(const Matrix& z, const Vector& y, const Vector& w, bool intercept,
                         bool scale_cols) {
  Standardized s;
  for (Index i = 0; i < w.size(); ++i) {
    if (!(w(i) >= 0.0) || !std::isfinite(w(i))) throw InputError("row weights must be finite and >= 0");
    if (w(i) > 0.0) s.rows.push_back(i);
  }
  if (s.rows.empty()) throw InputError("all row weights are zero");
  const Index m = static_cast<Index>(s.rows.size());
  const Index p = z.cols();
  s.z.resize(m, p);
  s.y.resize(m);
  s.w.resize(m);
  for (Index r = 0; r < m; ++r) {
    s.z.row(r) = z.row(s.rows[r]);
    s.y(r) = y(s.rows[r]);
    s.w(r) = w(s.rows[r]);
  }
  if (!s.z.allFinite() || !s.y.allFinite()) throw InputError("non-finite regressors or response");
  s.weight_sum = s.w.sum();
  s.center = intercept ? Vector((s.z.transpose() * s.w) / s.weight_sum) : Vector::Zero(p);
  s.z.rowwise() -= s.center.transpose();
  s.scale.resize(p);
  for (Index j = 0; j < p; ++j) {
    const double ms = s.z.col(j).array().square().matrix().dot(s.w) / s.weight_sum;
    const double sd = std::sqrt(ms);
    if (sd <= 1e-12 * (1.0 + std::abs(s.center(j)))) {
      s.scale(j) = 0.0;
      s.z.col(j).setZero();
    } else if (scale_cols) {
      s.scale(j) = sd;
      s.z.col(j) /= sd;
    } else {
      s.scale(j) = 1.0;
    }
  }
  return s;
}

// Smallest penalty with the all-zero solution, given the intercept-only residual.
double null_lambda(const Standardized& s, const Vector& resid) {
  if (s.z.cols() == 0) return 0.0;
  const Vector grad = s.z.transpose() * (s.w.cwiseProduct(resid));
  return 2.0 * grad.cwiseAbs().maxCoeff();
}

}  // namespace

Vector LassoFit::predict_rows(const Matrix& z) const {
  return (z * coef).array() + intercept;
}

Index LassoFit::nonzeros() const { return (coef.array() != 0.0).count(); }
Index PropensityFit::nonzeros() const { return (coef.array() != 0.0).count(); }

double lasso_lambda_max(const Matrix& z, const Vector& y, const Vector& weights,
                        const LassoOptions& opt) {
  Standardized s = standardize(z, y, weights, opt.fit_intercept, opt.standardize);
  const double ybar = opt.fit_intercept ? s.y.dot(s.w) / s.weight_sum : 0.0;
  return null_lambda(s, Vector(s.y.array() - ybar));
}

LassoFit lasso_fit(const Matrix& z, const Vector& y, const Vector& weights, double lambda,
                   const LassoOptions& opt) {
  if (z.rows() != y.size() || z.rows() != weights.size())
    throw InputError("lasso_fit: row count mismatch");
  if (!(lambda >= 0.0)) throw InputError("lasso_fit: lambda must be >= 0");
  Standardized s = standardize(z, y, weights, opt.fit_intercept, opt.standardize);
  const Index p = s.z.cols();

  const double ybar = opt.fit_intercept ? s.y.dot(s.w) / s.weight_sum : 0.0;
  Vector resid = s.y.array() - ybar;
  Vector theta = Vector::Zero(p);
  Vector curvature(p);
  for (Index j = 0; j < p; ++j) curvature(j) = s.z.col(j).array().square().matrix().dot(s.w);

  LassoFit fit;
  fit.lambda = lambda;
  auto objective = [&] {
    return resid.array().square().matrix().dot(s.w) + lambda * theta.lpNorm<1>();
  };
  if (opt.record_objective) fit.objective_trace.push_back(objective());

  const Matrix weighted = s.w.asDiagonal() * s.z;
  const bool null_fit = lambda >= null_lambda(s, resid);
  if (null_fit) fit.converged = true;
  for (int sweep = 1; sweep <= opt.max_sweeps && !null_fit; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) {
      const double a = curvature(j);
      if (a <= 0.0) continue;
      const auto col = s.z.col(j);
      const double b = weighted.col(j).dot(resid) + a * theta(j);
      const double updated = soft_threshold(b, 0.5 * lambda) / a;
      const double delta = updated - theta(j);
      if (delta != 0.0) {
        resid -= delta * col;
        theta(j) = updated;
        max_change = std::max(max_change, std::abs(delta) * std::sqrt(a / s.weight_sum));
      }
    }
    fit.sweeps = sweep;
    if (opt.record_objective) fit.objective_trace.push_back(objective());
    if (max_change < opt.tolerance) {
      fit.converged = true;
      break;
    }
  }

  fit.center = s.center;
  fit.scale = s.scale;
  fit.coef = Vector::Zero(p);
  for (Index j = 0; j < p; ++j)
    if (s.scale(j) > 0.0) fit.coef(j) = theta(j) / (opt.standardize ? s.scale(j) : 1.0);
  fit.intercept = opt.fit_intercept ? ybar - fit.coef.dot(s.center) : 0.0;
  const Index used = static_cast<Index>(s.rows.size());
  fit.selection = used == z.rows() ? "all rows" : std::to_string(used) + " of " +
                                                      std::to_string(z.rows()) + " rows";
  return fit;
}

namespace {

// sum log(1 + exp(eta)) - d eta, stable for large |eta|.
double logistic_loss(const Vector& eta, const Vector& d) {
  double total = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    const double e = eta(i);
    const double softplus = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    total += softplus - d(i) * e;
  }
  return total;
}

}  // namespace

PropensityFit logistic_lasso_fit(const Matrix& z, const Vector& d, double lambda,
                                 const LogisticOptions& opt) {
  if (z.rows() != d.size()) throw InputError("logistic_lasso_fit: row count mismatch");
  if (!(lambda >= 0.0)) throw InputError("logistic_lasso_fit: lambda must be >= 0");
  if (!(opt.trim_floor > 0.0 && opt.trim_floor < 1.0))
    throw InputError("logistic_lasso_fit: trim floor must lie in (0, 1)");
  Index ones = 0;
  for (Index i = 0; i < d.size(); ++i) {
    if (d(i) != 0.0 && d(i) != 1.0) throw InputError("logistic_lasso_fit: labels must be 0/1");
    ones += d(i) == 1.0;
  }
  if (ones == 0 || ones == d.size())
    throw DegenerateFitError("logistic_lasso_fit: labels contain a single class");

  Standardized s = standardize(z, d, Vector::Ones(d.size()), opt.fit_intercept, opt.standardize);
  const Index m = s.z.rows();
  const Index p = s.z.cols();

  const double mean_d = static_cast<double>(ones) / static_cast<double>(m);
  double b0 = opt.fit_intercept ? std::log(mean_d / (1.0 - mean_d)) : 0.0;
  Vector theta = Vector::Zero(p);
  Vector eta = Vector::Constant(m, b0);

  auto penalized = [&](double loss, const Vector& th) { return loss + lambda * th.lpNorm<1>(); };
  double loss = logistic_loss(eta, s.y);
  double obj = penalized(loss, theta);

  PropensityFit fit;
  fit.lambda = lambda;
  fit.trim_floor = opt.trim_floor;
  if (opt.record_objective) fit.objective_trace.push_back(obj);

  // Global Lipschitz bound of the smooth part; steps start there and grow
  // adaptively, with backtracking keeping every accepted step a descent step.
  const double lipschitz =
      0.25 * (s.z.squaredNorm() + (opt.fit_intercept ? static_cast<double>(m) : 0.0));
  const double safe_step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
  double step = safe_step;
  bool at_noise_floor = false;

  Vector prob(m), resid(m), grad(p), theta_new(p), eta_new(m);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    for (Index i = 0; i < m; ++i) prob(i) = logistic(eta(i));
    resid = prob - s.y;
    grad.noalias() = s.z.transpose() * resid;
    const double grad0 = opt.fit_intercept ? resid.sum() : 0.0;

    step = at_noise_floor ? safe_step : 2.0 * step;
    double loss_new = 0.0, b0_new = b0;
    for (int bt = 0; bt < 200; ++bt) {
      for (Index j = 0; j < p; ++j) theta_new(j) = soft_threshold(theta(j) - step * grad(j), step * lambda);
      b0_new = b0 - step * grad0;
      eta_new.noalias() = s.z * theta_new;
      eta_new.array() += b0_new;
      loss_new = logistic_loss(eta_new, s.y);
      const Vector diff = theta_new - theta;
      const double db0 = b0_new - b0;
      const double model = loss + grad.dot(diff) + grad0 * db0 +
                           (diff.squaredNorm() + db0 * db0) / (2.0 * step);
      if (loss_new <= model || step <= safe_step) break;
      step = std::max(0.5 * step, safe_step);
    }
    const double obj_new = penalized(loss_new, theta_new);
    double max_change = std::abs(b0_new - b0);
    if (p > 0) max_change = std::max(max_change, (theta_new - theta).cwiseAbs().maxCoeff());
    if (obj_new > obj && step > safe_step) {
      // Rounding let a long step through; the Lipschitz step descends in exact arithmetic.
      fit.iterations = it;
      at_noise_floor = true;
      continue;
    }
    const double decrease = obj - obj_new;
    theta = theta_new;
    b0 = b0_new;
    eta = eta_new;
    loss = loss_new;
    obj = obj_new;
    if (opt.record_objective) fit.objective_trace.push_back(obj);
    fit.iterations = it;
    if (decrease <= opt.rel_tolerance * std::max(1.0, std::abs(obj)) &&
        max_change <= opt.coef_tolerance * std::max(1.0, std::abs(b0))) {
      fit.converged = true;
      break;
    }
  }

  fit.center = s.center;
  fit.scale = s.scale;
  fit.coef = Vector::Zero(p);
  for (Index j = 0; j < p; ++j)
    if (s.scale(j) > 0.0) fit.coef(j) = theta(j) / (opt.standardize ? s.scale(j) : 1.0);
  fit.intercept = opt.fit_intercept ? b0 - fit.coef.dot(s.center) : 0.0;
  return fit;
}

namespace {

std::vector<Index> support(const Vector& coef) {
  std::vector<Index> sel;
  for (Index j = 0; j < coef.size(); ++j)
    if (coef(j) != 0.0) sel.push_back(j);
  return sel;
}

Matrix columns(const Matrix& z, const std::vector<Index>& sel, Index rows, bool intercept) {
  const Index off = intercept ? 1 : 0;
  Matrix out(rows, off + static_cast<Index>(sel.size()));
  if (intercept) out.col(0).setOnes();
  for (std::size_t k = 0; k < sel.size(); ++k) out.col(off + static_cast<Index>(k)) = z.col(sel[k]);
  return out;
}

}  // namespace

LassoFit post_lasso(const LassoFit& fit, const Matrix& z, const Vector& y, const Vector& weights,
                    const LassoOptions& opt) {
  const auto sel = support(fit.coef);
  Index active = 0;
  for (Index i = 0; i < weights.size(); ++i) active += weights(i) > 0.0;
  const Index k = static_cast<Index>(sel.size()) + (opt.fit_intercept ? 1 : 0);
  if (k == 0 || k >= active) return fit;

  const Vector root = weights.cwiseMax(0.0).cwiseSqrt();
  const Matrix a = root.asDiagonal() * columns(z, sel, z.rows(), opt.fit_intercept);
  const Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() < k) return fit;
  const Vector b = qr.solve(Vector(root.cwiseProduct(y)));

  LassoFit out = fit;
  out.coef.setZero();
  const Index off = opt.fit_intercept ? 1 : 0;
  for (std::size_t j = 0; j < sel.size(); ++j) out.coef(sel[j]) = b(off + static_cast<Index>(j));
  out.intercept = opt.fit_intercept ? b(0) : 0.0;
  out.post_selection = true;
  return out;
}

PropensityFit post_logistic(const PropensityFit& fit, const Matrix& z, const Vector& d,
                            const LogisticOptions& opt) {
  const auto sel = support(fit.coef);
  const Matrix a = columns(z, sel, z.rows(), opt.fit_intercept);
  const Index k = a.cols();
  if (k == 0 || k >= z.rows()) return fit;

  Vector b = Vector::Zero(k);
  for (std::size_t j = 0; j < sel.size(); ++j) b((opt.fit_intercept ? 1 : 0) + static_cast<Index>(j)) = fit.coef(sel[j]);
  if (opt.fit_intercept) b(0) = fit.intercept;

  Vector eta = a * b;
  double loss = logistic_loss(eta, d);
  bool converged = false;
  for (int it = 0; it < 100 && !converged; ++it) {
    Vector prob(eta.size()), curv(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      prob(i) = logistic(eta(i));
      curv(i) = prob(i) * (1.0 - prob(i));
    }
    const Vector grad = a.transpose() * (prob - d);
    const Matrix hess = a.transpose() * curv.asDiagonal() * a;
    const Eigen::LDLT<Matrix> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-12 * hess.diagonal().maxCoeff()))
      return fit;
    const Vector step = ldlt.solve(grad);
    double t = 1.0, loss_new = loss;
    Vector b_new = b;
    for (int bt = 0; bt < 50; ++bt) {
      b_new = b - t * step;
      loss_new = logistic_loss(a * b_new, d);
      if (loss_new <= loss) break;
      t *= 0.5;
    }
    if (loss_new > loss) break;
    converged = (b_new - b).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, b_new.cwiseAbs().maxCoeff());
    b = b_new;
    eta = a * b;
    loss = loss_new;
  }
  // Separation: the unpenalized refit has no finite solution.
  if (!converged || !b.allFinite() || b.cwiseAbs().maxCoeff() > 50.0) return fit;

  PropensityFit out = fit;
  out.coef.setZero();
  const Index off = opt.fit_intercept ? 1 : 0;
  for (std::size_t j = 0; j < sel.size(); ++j) out.coef(sel[j]) = b(off + static_cast<Index>(j));
  out.intercept = opt.fit_intercept ? b(0) : 0.0;
  out.post_selection = true;
  return out;
}

double trim_propensity(double index, double trim_floor) {
  const double upper = std::nextafter(1.0, 0.0);
  return std::min(upper, std::max(0.5 * trim_floor, logistic(index)));
}

double predict_propensity(const PropensityFit& fit, const Eigen::Ref<const Vector>& z) {
  if (z.size() != fit.coef.size()) throw InputError("predict_propensity: dimension mismatch");
  return trim_propensity(fit.index(z), fit.trim_floor);
}

double silverman_bandwidth(const Vector& u) {
  const Index n = u.size();
  if (n < 2) throw InputError("silverman_bandwidth: need at least two points");
  const double mean = u.mean();
  const double sd = std::sqrt((u.array() - mean).square().sum() / static_cast<double>(n - 1));
  std::vector<double> sorted(u.data(), u.data() + n);
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min<std::size_t>(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) throw DegenerateFitError("density score: residuals have zero variance");
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

Vector kde_at_samples_serial(const Vector& u, double h) {
  const Index n = u.size();
  const double norm = 1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * std::numbers::pi));
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Index j = 0; j < n; ++j) {
      const double t = (u(i) - u(j)) / h;
      acc += std::exp(-0.5 * t * t);
    }
    out(i) = acc * norm;
  }
  return out;
}

Vector kde_at_samples(const Vector& u, double h) {
  // Sorted sweep; kernel terms beyond 10 bandwidths are below 2e-22 of the
  // peak and are skipped.
  const Index n = u.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return u(a) < u(b); });
  std::vector<double> sorted(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) sorted[i] = u(order[i]);
  const double reach = 10.0 * h;
  const double norm = 1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * std::numbers::pi));

  Vector out(n);
#pragma omp parallel for schedule(static)
  for (Index k = 0; k < n; ++k) {
    const double x = sorted[k];
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), x - reach);
    const auto hi = std::upper_bound(sorted.begin(), sorted.end(), x + reach);
    double acc = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const double t = (x - *it) / h;
      acc += std::exp(-0.5 * t * t);
    }
    out(order[k]) = acc * norm;
  }
  return out;
}

DensityScoreFit fit_density_score(const Vector& residuals, bool adaptive,
                                  std::optional<double> bandwidth) {
  const Index n = residuals.size();
  if (!residuals.allFinite()) throw InputError("density score: non-finite residuals");
  if (!bandwidth && n < 10) throw InputError("density score: need at least 10 residuals");
  if (n < 1) throw InputError("density score: empty sample");
  if (bandwidth && !(*bandwidth > 0.0)) throw InputError("density score: bandwidth must be > 0");

  DensityScoreFit fit;
  fit.residuals = residuals;
  fit.adaptive = adaptive;
  fit.global_bandwidth = bandwidth ? *bandwidth : silverman_bandwidth(residuals);
  fit.bandwidths = Vector::Constant(n, fit.global_bandwidth);
  if (adaptive && n > 1) {
    const Vector pilot = kde_at_samples(residuals, fit.global_bandwidth);
    const double log_g = pilot.array().log().mean();
    for (Index i = 0; i < n; ++i)
      fit.bandwidths(i) = fit.global_bandwidth * std::exp(-0.5 * (std::log(pilot(i)) - log_g));
  }
  return fit;
}

namespace {

// log sum_i exp(-z_i^2/2)/h_i and the matching weighted mean of -z_i/h_i.
struct MixtureTerms {
  double log_mass;
  double score;
};

MixtureTerms mixture_terms(const DensityScoreFit& fit, double u) {
  const Index n = fit.residuals.size();
  double max_log = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    const double z = (u - fit.residuals(i)) / fit.bandwidths(i);
    max_log = std::max(max_log, -0.5 * z * z - std::log(fit.bandwidths(i)));
  }
  double mass = 0.0, slope = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double h = fit.bandwidths(i);
    const double z = (u - fit.residuals(i)) / h;
    const double a = std::exp(-0.5 * z * z - std::log(h) - max_log);
    mass += a;
    slope += a * (-z / h);
  }
  return {max_log + std::log(mass), slope / mass};
}

}  // namespace

double DensityScoreFit::log_density(double u) const {
  const double n = static_cast<double>(residuals.size());
  return mixture_terms(*this, u).log_mass - std::log(n) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double DensityScoreFit::density(double u) const { return std::exp(log_density(u)); }

double eval_log_density_derivative(const DensityScoreFit& fit, double u) {
  if (fit.residuals.size() == 0) throw InputError("density score: empty fit");
  const MixtureTerms t = mixture_terms(fit, u);
  const double log_f = t.log_mass - std::log(static_cast<double>(fit.residuals.size())) -
                       0.5 * std::log(2.0 * std::numbers::pi);
  if (log_f < std::log(1e-300)) {
    std::ostringstream os;
    os << "density score: estimated density at " << u << " is below 1e-300";
    throw DomainError(os.str());
  }
  return t.score;
}

}  // namespace lre
