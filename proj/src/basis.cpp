#include "lre/basis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lre {

BasisSpec BasisSpec::polynomial(int degree, int dim, bool intercept) {
  BasisSpec s;
  s.kind = BasisKind::polynomial;
  s.degree = degree;
  s.dim = dim;
  s.include_intercept = intercept;
  s.validate();
  return s;
}

BasisSpec BasisSpec::bspline(int order, std::vector<double> interior, double lower, double upper,
                             bool intercept) {
  BasisSpec s;
  s.kind = BasisKind::bspline;
  s.degree = order;
  s.knots = std::move(interior);
  s.lower = lower;
  s.upper = upper;
  s.include_intercept = intercept;
  s.dim = 1;
  s.validate();
  return s;
}

BasisSpec BasisSpec::bspline_from_data(int order, int n_knots, std::span<const double> x,
                                       bool intercept) {
  if (x.empty()) throw InputError("bspline_from_data: empty sample");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> interior;
  const double n = static_cast<double>(sorted.size());
  for (int k = 1; k <= n_knots; ++k) {
    // Type-7 empirical quantile.
    const double pos = (n - 1.0) * k / (n_knots + 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    interior.push_back(sorted[lo] + frac * (sorted[hi] - sorted[lo]));
  }
  return bspline(order, std::move(interior), sorted.front(), sorted.back(), intercept);
}

Index BasisSpec::size() const {
  Index full = 0;
  if (kind == BasisKind::polynomial) {
    full = 1 + static_cast<Index>(degree) * dim;
  } else {
    full = static_cast<Index>(knots.size()) + degree;
  }
  return include_intercept ? full : full - 1;
}

void BasisSpec::validate() const {
  auto fail = [](const std::string& m) { throw InputError("basis spec: " + m); };
  if (kind == BasisKind::polynomial && degree < 0) fail("polynomial degree must be >= 0");
  if (kind == BasisKind::bspline && degree < 1) fail("bspline order must be >= 1");
  if (dim < 1) fail("covariate dimension must be >= 1");
  if (kind == BasisKind::bspline) {
    if (dim != 1) fail("bspline basis is univariate");
    if (!(lower < upper)) fail("bspline boundaries must satisfy lower < upper");
    for (std::size_t i = 0; i < knots.size(); ++i) {
      if (!(knots[i] > lower && knots[i] < upper)) fail("interior knot outside (lower, upper)");
      if (i > 0 && !(knots[i] > knots[i - 1])) fail("knots must be strictly increasing");
    }
  }
  if (size() < 1) fail("basis has no functions");
}

namespace {

// All order-`order` B-spline values at x on the clamped knot vector.
Vector bspline_values(double x, const BasisSpec& spec) {
  const int k = spec.degree;
  std::vector<double> t;
  t.reserve(spec.knots.size() + 2 * k);
  t.insert(t.end(), k, spec.lower);
  t.insert(t.end(), spec.knots.begin(), spec.knots.end());
  t.insert(t.end(), k, spec.upper);
  const int n = static_cast<int>(t.size()) - k;

  // Knot span mu with t[mu] <= x < t[mu+1]; the right endpoint belongs to
  // the last non-degenerate span.
  int mu = k - 1;
  if (x >= spec.upper) {
    mu = n - 1;
  } else {
    while (mu + 1 < n && t[mu + 1] <= x) ++mu;
  }

  // Cox-de Boor triangle for the k functions supported on the span.
  std::vector<double> nb(k, 0.0), left(k, 0.0), right(k, 0.0);
  nb[0] = 1.0;
  for (int j = 1; j < k; ++j) {
    left[j] = x - t[mu + 1 - j];
    right[j] = t[mu + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? nb[r] / denom : 0.0;
      nb[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    nb[j] = saved;
  }
  Vector out = Vector::Zero(n);
  for (int r = 0; r < k; ++r) out(mu - k + 1 + r) = nb[r];
  return out;
}

}  // namespace

Vector eval_basis(std::span<const double> x, const BasisSpec& spec, bool* clamped) {
  if (static_cast<int>(x.size()) != spec.dim) {
    std::ostringstream os;
    os << "eval_basis: covariate has dimension " << x.size() << ", spec expects " << spec.dim;
    throw InputError(os.str());
  }
  if (clamped) *clamped = false;

  if (spec.kind == BasisKind::polynomial) {
    Vector p(spec.size());
    Index c = 0;
    if (spec.include_intercept) p(c++) = 1.0;
    for (int power = 1; power <= spec.degree; ++power)
      for (int j = 0; j < spec.dim; ++j) p(c++) = std::pow(x[j], power);
    return p;
  }

  double v = x[0];
  if (v < spec.lower || v > spec.upper) {
    if (clamped) *clamped = true;
    v = std::clamp(v, spec.lower, spec.upper);
  }
  Vector all = bspline_values(v, spec);
  if (spec.include_intercept) return all;
  return all.tail(all.size() - 1);
}

SymmetricMatrix DesignMatrix::gram() const {
  const double n = static_cast<double>(values.rows());
  Matrix q = Matrix::Zero(values.cols(), values.cols());
  q.selfadjointView<Eigen::Upper>().rankUpdate(values.transpose(), 1.0 / n);
  return SymmetricMatrix(std::move(q));
}

DesignMatrix design_matrix(const Matrix& x, const BasisSpec& spec) {
  spec.validate();
  const Index d = spec.size();
  if (x.rows() < d) {
    std::ostringstream os;
    os << "design_matrix: " << x.rows() << " rows cannot identify " << d << " basis coefficients";
    throw InputError(os.str());
  }
  if (x.cols() != spec.dim) throw InputError("design_matrix: covariate dimension mismatch");
  DesignMatrix out{Matrix(x.rows(), d), spec, 0};
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) row[j] = x(i, j);
    bool clamped = false;
    out.values.row(i) = eval_basis(row, spec, &clamped).transpose();
    if (clamped) ++out.clamped_rows;
  }
  return out;
}

double sup_norm_xi(const BasisSpec& spec, const Matrix& grid) {
  if (grid.rows() == 0) throw InputError("sup_norm_xi: empty grid");
  double best = 0.0;
  std::vector<double> row(static_cast<std::size_t>(grid.cols()));
  for (Index i = 0; i < grid.rows(); ++i) {
    for (Index j = 0; j < grid.cols(); ++j) row[j] = grid(i, j);
    best = std::max(best, eval_basis(row, spec).norm());
  }
  return best;
}

}  // namespace lre
