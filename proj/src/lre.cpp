#include "lre/lre.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

namespace lre {

namespace {

void check_shapes(const DesignMatrix& p, const Vector& y) {
  if (p.rows() != y.size()) throw InputError("second stage: design rows and signal length differ");
  if (p.rows() == 0) throw InputError("second stage: empty sample");
  if (!y.allFinite()) throw InputError("second stage: non-finite signal values");
}

Vector solve_identified(const SymmetricMatrix& q, const Vector& b) {
  try {
    return solve_spd(q, b);
  } catch (const SingularityError& e) {
    throw SingularityError(
        std::string("basis not identified: the regressors are collinear on this sample; ") + e.what(),
        e.min_eigenvalue());
  }
}

std::span<const double> row_span(const Matrix& grid, Index i, std::vector<double>& buf) {
  buf.resize(static_cast<std::size_t>(grid.cols()));
  for (Index j = 0; j < grid.cols(); ++j) buf[j] = grid(i, j);
  return buf;
}

}  // namespace

double LREFit::predict(std::span<const double> x) const { return eval_basis(x, spec).dot(beta); }

double LREFit::scale_at(std::span<const double> x) const {
  const Vector px = eval_basis(x, spec);
  return std::sqrt(std::max(0.0, px.dot(omega.matrix() * px)));
}

Vector fit_lre(const DesignMatrix& p, const Vector& y_hat) {
  check_shapes(p, y_hat);
  const double n = static_cast<double>(p.rows());
  return solve_identified(p.gram(), p.values.transpose() * y_hat / n);
}

SymmetricMatrix estimate_omega(const DesignMatrix& p, const Vector& y_hat, const Vector& beta) {
  check_shapes(p, y_hat);
  const double n = static_cast<double>(p.rows());
  const Index d = p.cols();
  const SymmetricMatrix q = p.gram();
  const Vector resid = y_hat - p.values * beta;

  const Matrix weighted = resid.asDiagonal() * p.values;

  Matrix q_inv;
  try {
    q_inv = SymmetricMatrix(solve_spd(q, Matrix(Matrix::Identity(d, d)))).matrix();
  } catch (const SingularityError& e) {
    throw SingularityError(std::string("basis not identified: ") + e.what(), e.min_eigenvalue());
  }
  // Q^-1 M Q^-1 with M = W'W / n, formed as G G' so rounding stays symmetric.
  const Matrix g = q_inv * weighted.transpose() / std::sqrt(n);
  Matrix omega = g * g.transpose();
  const double scale = std::max(1e-300, omega.cwiseAbs().maxCoeff());
  const double asym = (omega - omega.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    std::ostringstream os;
    os << "estimate_omega: sandwich asymmetry " << asym << " exceeds tolerance";
    throw Error(os.str());
  }
  return SymmetricMatrix(std::move(omega));
}

LREFit fit_lre_full(const DesignMatrix& p, const Vector& y_hat) {
  LREFit fit;
  fit.beta = fit_lre(p, y_hat);
  fit.q = p.gram();
  fit.omega = estimate_omega(p, y_hat, fit.beta);
  fit.n = p.rows();
  fit.spec = p.spec;
  return fit;
}

Interval pointwise_interval(const LREFit& fit, std::span<const double> x0, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("pointwise_interval: alpha must lie in (0, 1)");
  const double center = fit.predict(x0);
  const double half = normal_quantile(1.0 - alpha / 2.0) * fit.scale_at(x0) /
                      std::sqrt(static_cast<double>(fit.n));
  return {center - half, center, center + half};
}

Vector bootstrap_draw(const DesignMatrix& p, const Vector& y_hat, const Vector& weights) {
  check_shapes(p, y_hat);
  if (weights.size() != p.rows()) throw InputError("bootstrap_draw: weight vector length mismatch");
  if (!(weights.minCoeff() > 0.0)) throw DomainError("bootstrap_draw: weights must be positive");
  const double n = static_cast<double>(p.rows());
  const Index d = p.cols();
  const Matrix root = weights.cwiseSqrt().asDiagonal() * p.values;
  Matrix g = Matrix::Zero(d, d);
  g.selfadjointView<Eigen::Upper>().rankUpdate(root.transpose(), 1.0 / n);
  const Vector rhs = p.values.transpose() * weights.cwiseProduct(y_hat) / n;
  return solve_spd(SymmetricMatrix(std::move(g)), rhs);
}

namespace {

double sup_t_one_draw(const DesignMatrix& p, const Vector& y_hat, const Vector& beta,
                      const Matrix& grid_basis, const Vector& e_hat, const BandOptions& opt,
                      RngStream rng, int& retries) {
  Vector h(p.rows());
  for (int attempt = 0;; ++attempt) {
    if (opt.sampler) {
      opt.sampler(rng, h);
    } else {
      for (Index i = 0; i < h.size(); ++i) h(i) = rng.exponential();
    }
    try {
      const Vector delta = bootstrap_draw(p, y_hat, h) - beta;
      return ((grid_basis * delta).cwiseAbs().array() / e_hat.array()).maxCoeff();
    } catch (const SingularityError&) {
      if (attempt >= opt.max_retries) throw;
      ++retries;
    }
  }
}

void check_band_inputs(const DesignMatrix& p, const Matrix& grid_basis, const Vector& e_hat,
                       const BandOptions& opt) {
  if (opt.draws < 1) throw InputError("bootstrap: need at least one draw");
  if (grid_basis.cols() != p.cols() || grid_basis.rows() != e_hat.size())
    throw InputError("bootstrap: grid basis does not match the design");
}

}  // namespace

std::vector<double> bootstrap_sup_t_serial(const DesignMatrix& p, const Vector& y_hat,
                                           const Vector& beta, const Matrix& grid_basis,
                                           const Vector& e_hat, const BandOptions& opt,
                                           const RngStream& rng, int* retries) {
  check_band_inputs(p, grid_basis, e_hat, opt);
  std::vector<double> t(static_cast<std::size_t>(opt.draws));
  int total = 0;
  for (int b = 0; b < opt.draws; ++b)
    t[b] = sup_t_one_draw(p, y_hat, beta, grid_basis, e_hat, opt, rng.substream(b), total);
  std::sort(t.begin(), t.end());
  if (retries) *retries = total;
  return t;
}

std::vector<double> bootstrap_sup_t(const DesignMatrix& p, const Vector& y_hat, const Vector& beta,
                                    const Matrix& grid_basis, const Vector& e_hat,
                                    const BandOptions& opt, const RngStream& rng, int* retries) {
  check_band_inputs(p, grid_basis, e_hat, opt);
  std::vector<double> t(static_cast<std::size_t>(opt.draws));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(opt.draws));
  int total = 0;
#pragma omp parallel for schedule(static) reduction(+ : total)
  for (int b = 0; b < opt.draws; ++b) {
    try {
      t[b] = sup_t_one_draw(p, y_hat, beta, grid_basis, e_hat, opt, rng.substream(b), total);
    } catch (...) {
      errors[b] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::sort(t.begin(), t.end());
  if (retries) *retries = total;
  return t;
}

double bootstrap_critical_value(const std::vector<double>& sorted_t, double alpha) {
  if (sorted_t.empty()) throw InputError("bootstrap_critical_value: no draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("bootstrap_critical_value: alpha must lie in (0, 1)");
  const double b = static_cast<double>(sorted_t.size());
  // Guard (1 - alpha) B against representation error before taking the ceiling.
  auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * b - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted_t.size());
  return sorted_t[k - 1];
}

BandResult uniform_band(const LREFit& fit, const DesignMatrix& p, const Vector& y_hat,
                        const Matrix& grid, const BandOptions& opt, const RngStream& rng) {
  if (opt.draws < 50) throw InputError("uniform_band: need at least 50 bootstrap draws");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw DomainError("uniform_band: alpha must lie in (0, 1)");
  if (grid.rows() == 0) throw InputError("uniform_band: empty grid");
  if (grid.cols() != fit.spec.dim) throw InputError("uniform_band: grid dimension mismatch");

  const Index g = grid.rows();
  BandResult band;
  band.grid = grid;
  band.draws = opt.draws;
  band.alpha = opt.alpha;
  band.n = fit.n;
  band.g_hat.resize(g);
  band.e_hat.resize(g);
  Matrix grid_basis(g, fit.beta.size());
  std::vector<double> buf;
  for (Index i = 0; i < g; ++i) {
    const Vector px = eval_basis(row_span(grid, i, buf), fit.spec);
    grid_basis.row(i) = px.transpose();
    band.g_hat(i) = px.dot(fit.beta);
    band.e_hat(i) = std::sqrt(std::max(0.0, px.dot(fit.omega.matrix() * px)));
    if (!(band.e_hat(i) > 0.0)) {
      std::ostringstream os;
      os << "uniform_band: standard error vanishes at grid point " << i;
      throw DomainError(os.str());
    }
  }

  band.t_stats = bootstrap_sup_t(p, y_hat, fit.beta, grid_basis, band.e_hat, opt, rng, &band.retries);
  band.t_star = bootstrap_critical_value(band.t_stats, opt.alpha);
  band.z_crit = normal_quantile(1.0 - opt.alpha / 2.0);
  const double root_n = std::sqrt(static_cast<double>(fit.n));
  band.pw_lo = band.g_hat - band.z_crit * band.e_hat / root_n;
  band.pw_hi = band.g_hat + band.z_crit * band.e_hat / root_n;
  band.unif_lo = band.g_hat - band.t_star * band.e_hat;
  band.unif_hi = band.g_hat + band.t_star * band.e_hat;
  return band;
}

Diagnostics gram_diagnostics(const SymmetricMatrix& q) {
  Diagnostics out;
  Eigen::SelfAdjointEigenSolver<Matrix> es(q.matrix(), Eigen::EigenvaluesOnly);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  out.max_eigenvalue = es.eigenvalues().maxCoeff();
  out.condition_number = out.min_eigenvalue > 0.0 ? out.max_eigenvalue / out.min_eigenvalue
                                                  : std::numeric_limits<double>::infinity();
  const double max_diag = q.matrix().diagonal().cwiseAbs().maxCoeff();
  out.singular = !(out.min_eigenvalue >= 1e-10 * max_diag) || max_diag == 0.0;
  return out;
}

Diagnostics diagnostics(const LREFit& fit, const Matrix& grid, std::optional<double> trim_binding_fraction) {
  Diagnostics out = gram_diagnostics(fit.q);
  if (grid.rows() > 0) out.xi = sup_norm_xi(fit.spec, grid);
  out.trim_binding_fraction = trim_binding_fraction;
  return out;
}

}  // namespace lre
