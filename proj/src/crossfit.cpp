#include "lre/crossfit.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>

namespace lre {

std::vector<Index> FoldAssignment::rows_in(int f) const {
  std::vector<Index> rows;
  for (Index i = 0; i < size(); ++i)
    if (fold[i] == f) rows.push_back(i);
  return rows;
}

std::vector<Index> FoldAssignment::rows_outside(int f) const {
  std::vector<Index> rows;
  for (Index i = 0; i < size(); ++i)
    if (fold[i] != f) rows.push_back(i);
  return rows;
}

std::vector<Index> FoldAssignment::fold_sizes() const {
  std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
  for (int f : fold) ++sizes[f];
  return sizes;
}

FoldAssignment make_folds(Index n, int k, RngStream& rng) {
  if (k < 2 || static_cast<Index>(k) > n) {
    std::ostringstream os;
    os << "make_folds: need 2 <= K <= N (K = " << k << ", N = " << n << ")";
    throw InputError(os.str());
  }
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[i], perm[j]);
  }
  FoldAssignment out;
  out.k = k;
  out.fold.assign(static_cast<std::size_t>(n), 0);
  for (Index pos = 0; pos < n; ++pos) out.fold[perm[pos]] = static_cast<int>(pos % k);
  return out;
}

Vector capd_features(double w, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z) {
  const Index r = x.size(), p = z.size();
  Vector f(2 + r + p + r);
  f(0) = w;
  f(1) = w * w;
  f.segment(2, r) = x;
  f.segment(2 + r, p) = z;
  f.segment(2 + r + p, r) = w * x;
  return f;
}

namespace {

bool two_sided_trim(SignalKind kind) {
  return kind == SignalKind::robust_cate || kind == SignalKind::ipw_cate;
}

double propensity_at(const PropensityFit& fit, const Eigen::Ref<const Vector>& z, bool two_sided) {
  double s = predict_propensity(fit, z);
  if (two_sided) s = std::min(s, 1.0 - 0.5 * fit.trim_floor);
  return s;
}

Matrix with_column(const Matrix& a, const Vector& c) {
  Matrix out(a.rows(), a.cols() + 1);
  out << a, c;
  return out;
}

Vector indicator(const Vector& v, double value) {
  return (v.array() == value).cast<double>();
}

Vector w_column(const Dataset& data) {
  if (!data.w) throw InputError("robust_capd needs the continuous variable column w");
  return *data.w;
}

Matrix capd_design(const Dataset& data) {
  const Vector w = w_column(data);
  Matrix f(data.size(), 2 + 2 * data.x.cols() + data.z.cols());
  for (Index i = 0; i < data.size(); ++i)
    f.row(i) = capd_features(w(i), data.x.row(i).transpose(), data.z.row(i).transpose()).transpose();
  return f;
}

}  // namespace

std::shared_ptr<const PenalizedBundle> PenalizedLearner::fit_penalized(const Dataset& train) const {
  auto b = std::make_shared<PenalizedBundle>();
  b->kind = kind_;
  b->config = config_;
  const Index n = train.size();
  LogisticOptions logit = config_.logistic;
  logit.trim_floor = config_.trim_floor;

  auto penalty = [&](Index p) { return config_.lambda ? *config_.lambda : default_penalty(n, std::max<Index>(p, 1)); };
  auto regress = [&](const Matrix& z, const Vector& y, const Vector& weights) {
    if (weights.sum() <= 0.0) throw DegenerateFitError("no rows available for the outcome regression");
    LassoFit f = lasso_fit(z, y, weights, penalty(z.cols()), config_.lasso);
    return config_.post_selection ? post_lasso(f, z, y, weights, config_.lasso) : f;
  };
  auto classify = [&](const Matrix& z, const Vector& labels) {
    PropensityFit f = logistic_lasso_fit(z, labels, penalty(z.cols()), logit);
    return config_.post_selection ? post_logistic(f, z, labels, logit) : f;
  };

  const bool fit_mu = !config_.force_mu;
  const bool fit_s = !config_.force_s;
  switch (kind_) {
    case SignalKind::robust_missing:
      if (fit_mu) b->mu = regress(train.z, train.y_o, train.d);
      if (fit_s) b->s = classify(train.z, train.d);
      break;
    case SignalKind::ipw_missing:
    case SignalKind::ipw_cate:
      if (fit_s) b->s = classify(train.z, train.d);
      break;
    case SignalKind::robust_cate:
      if (fit_mu) {
        b->mu1 = regress(train.z, train.y_o, indicator(train.d, 1.0));
        b->mu0 = regress(train.z, train.y_o, indicator(train.d, 0.0));
      }
      if (fit_s) b->s = classify(train.z, train.d);
      break;
    case SignalKind::robust_cate_missing: {
      if (!train.t) throw InputError("robust_cate_missing needs the treatment column t");
      const Vector& t = *train.t;
      if (fit_mu) {
        b->mu1 = regress(train.z, train.y_o, train.d.cwiseProduct(t));
        b->mu0 = regress(train.z, train.y_o, train.d.cwiseProduct(indicator(t, 0.0)));
      }
      if (fit_s) {
        b->s = classify(with_column(train.z, t), train.d);
        b->h = classify(train.z, t);
      }
      break;
    }
    case SignalKind::robust_capd: {
      const Vector w = w_column(train);
      const Vector ones = Vector::Ones(n);
      if (fit_mu) b->mu = regress(capd_design(train), train.y_o, ones);
      Matrix xz(n, train.x.cols() + train.z.cols());
      xz << train.x, train.z;
      b->location = regress(xz, w, ones);
      const Vector resid = w - b->location->predict_rows(xz);
      b->density = fit_density_score(resid, config_.adaptive_kde);
      break;
    }
  }
  return b;
}

std::shared_ptr<const NuisanceBundle> PenalizedLearner::fit(const Dataset& train) const {
  return fit_penalized(train);
}

NuisanceEvaluations PenalizedBundle::evaluate(const Dataset& data, const std::vector<Index>& rows) const {
  const auto m = static_cast<Index>(rows.size());
  NuisanceEvaluations e = NuisanceEvaluations::sized(m);
  const bool two_sided = two_sided_trim(kind);
  const double forced_mu = config.force_mu.value_or(0.0);

  for (Index r = 0; r < m; ++r) {
    const Index i = rows[r];
    const auto z = data.z.row(i).transpose();
    switch (kind) {
      case SignalKind::robust_missing:
        e.mu(r) = mu ? mu->predict(z) : forced_mu;
        [[fallthrough]];
      case SignalKind::ipw_missing:
      case SignalKind::ipw_cate:
        e.s(r) = s ? propensity_at(*s, z, two_sided) : *config.force_s;
        break;
      case SignalKind::robust_cate:
        e.mu1(r) = mu1 ? mu1->predict(z) : forced_mu;
        e.mu0(r) = mu0 ? mu0->predict(z) : forced_mu;
        e.s(r) = s ? propensity_at(*s, z, true) : *config.force_s;
        break;
      case SignalKind::robust_cate_missing: {
        e.mu1(r) = mu1 ? mu1->predict(z) : forced_mu;
        e.mu0(r) = mu0 ? mu0->predict(z) : forced_mu;
        if (s) {
          Vector zt(z.size() + 1);
          zt << z, (*data.t)(i);
          e.s(r) = propensity_at(*s, zt, false);
          e.h(r) = propensity_at(*h, z, true);
        } else {
          e.s(r) = *config.force_s;
          e.h(r) = *config.force_s;
        }
        break;
      }
      case SignalKind::robust_capd: {
        const double w = (*data.w)(i);
        const auto x = data.x.row(i).transpose();
        if (mu) {
          const Vector f = capd_features(w, x, z);
          e.mu(r) = mu->predict(f);
          const Index nx = x.size(), nz = z.size();
          e.dmu(r) = mu->coef(0) + 2.0 * mu->coef(1) * w + mu->coef.segment(2 + nx + nz, nx).dot(x);
        } else {
          e.mu(r) = forced_mu;
          e.dmu(r) = 0.0;
        }
        Vector xz(x.size() + z.size());
        xz << x, z;
        e.dlogf(r) = eval_log_density_derivative(*density, w - location->predict(xz));
        break;
      }
    }
  }
  return e;
}

namespace {

class FixedBundle final : public NuisanceBundle {
 public:
  explicit FixedBundle(FixedLearner::Evaluator f) : f_(std::move(f)) {}
  NuisanceEvaluations evaluate(const Dataset& data, const std::vector<Index>& rows) const override {
    return f_(data, rows);
  }

 private:
  FixedLearner::Evaluator f_;
};

void scatter(const Vector& src, const std::vector<Index>& rows, Vector& dst) {
  if (src.size() != static_cast<Index>(rows.size())) return;
  for (std::size_t r = 0; r < rows.size(); ++r) dst(rows[r]) = src(static_cast<Index>(r));
}

struct FoldOutput {
  std::shared_ptr<const NuisanceBundle> bundle;
  std::vector<Index> rows;
  NuisanceEvaluations eval;
};

FoldOutput run_fold(const Dataset& data, const FoldAssignment& folds, int f,
                    const NuisanceLearner& learner) {
  FoldOutput out;
  try {
    out.bundle = learner.fit(data.subset(folds.rows_outside(f)));
    out.rows = folds.rows_in(f);
    out.eval = out.bundle->evaluate(data, out.rows);
  } catch (const DegenerateFitError& e) {
    throw DegenerateFitError("fold " + std::to_string(f) + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError("fold " + std::to_string(f) + ": " + e.what());
  }
  return out;
}

CrossFitResult assemble(const Dataset& data, const FoldAssignment& folds, SignalKind kind,
                        std::vector<FoldOutput>& parts) {
  CrossFitResult res;
  res.folds = folds;
  res.eval = NuisanceEvaluations::sized(data.size());
  for (auto& part : parts) {
    scatter(part.eval.mu, part.rows, res.eval.mu);
    scatter(part.eval.mu1, part.rows, res.eval.mu1);
    scatter(part.eval.mu0, part.rows, res.eval.mu0);
    scatter(part.eval.s, part.rows, res.eval.s);
    scatter(part.eval.h, part.rows, res.eval.h);
    scatter(part.eval.dlogf, part.rows, res.eval.dlogf);
    scatter(part.eval.dmu, part.rows, res.eval.dmu);
    res.bundles.push_back(std::move(part.bundle));
  }
  res.y_hat = build_signals(data, res.eval, kind);

  Index binding = 0, counted = 0;
  for (Index i = 0; i < data.size(); ++i) {
    const double s = res.eval.s(i);
    if (std::isnan(s)) continue;
    ++counted;
    const auto* pb = dynamic_cast<const PenalizedBundle*>(res.bundles[folds.fold[i]].get());
    if (pb && pb->s && s <= 0.5 * pb->s->trim_floor) ++binding;
  }
  res.trim_binding_fraction = counted ? static_cast<double>(binding) / static_cast<double>(counted) : 0.0;
  return res;
}

void check_inputs(const Dataset& data, const FoldAssignment& folds) {
  data.validate();
  if (folds.size() != data.size()) throw InputError("crossfit: fold assignment does not match the sample size");
}

}  // namespace

std::shared_ptr<const NuisanceBundle> FixedLearner::fit(const Dataset&) const {
  return std::make_shared<FixedBundle>(f_);
}

CrossFitResult crossfit_signals(const Dataset& data, const FoldAssignment& folds, SignalKind kind,
                                const NuisanceLearner& learner) {
  check_inputs(data, folds);
  std::vector<FoldOutput> parts(static_cast<std::size_t>(folds.k));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(folds.k));
#pragma omp parallel for schedule(dynamic, 1)
  for (int f = 0; f < folds.k; ++f) {
    try {
      parts[f] = run_fold(data, folds, f, learner);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return assemble(data, folds, kind, parts);
}

CrossFitResult crossfit_signals_serial(const Dataset& data, const FoldAssignment& folds,
                                       SignalKind kind, const NuisanceLearner& learner) {
  check_inputs(data, folds);
  std::vector<FoldOutput> parts;
  for (int f = 0; f < folds.k; ++f) parts.push_back(run_fold(data, folds, f, learner));
  return assemble(data, folds, kind, parts);
}

}  // namespace lre
