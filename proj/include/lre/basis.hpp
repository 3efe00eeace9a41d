#pragma once

#include <span>
#include <vector>

#include "lre/numerics.hpp"

namespace lre {

enum class BasisKind { polynomial, bspline };

/// Declarative description of the technical regressors p(x).
///
/// Polynomial: for r = 1, (1, x, ..., x^degree); for r > 1, main effects only,
/// (1, x_1..x_r, x_1^2..x_r^2, ...). The leading 1 is dropped when
/// include_intercept is false.
///
/// B-spline: univariate (r = 1) basis of the given order (order 2 = piecewise
/// linear) on [lower, upper] with the listed interior knots. The knot vector
/// repeats each boundary `order` times, giving knots.size() + order functions.
/// They already sum to one, so include_intercept = false drops the first
/// function to keep an intercept elsewhere identifiable.
struct BasisSpec {
  BasisKind kind = BasisKind::polynomial;
  int degree = 1;
  std::vector<double> knots;
  double lower = 0.0;
  double upper = 1.0;
  bool include_intercept = true;
  int dim = 1;

  static BasisSpec polynomial(int degree, int dim = 1, bool intercept = true);
  static BasisSpec bspline(int order, std::vector<double> interior, double lower, double upper,
                           bool intercept = true);
  /// B-spline spec whose boundaries are the sample range and whose interior
  /// knots sit at equally spaced empirical quantiles of x.
  static BasisSpec bspline_from_data(int order, int n_knots, std::span<const double> x,
                                     bool intercept = true);

  /// Number of basis functions d.
  Index size() const;
  /// Throws InputError when the spec is inconsistent.
  void validate() const;
};

/// p(x). For B-splines, points outside [lower, upper] are clamped to the
/// nearest boundary and *clamped (if given) is set.
Vector eval_basis(std::span<const double> x, const BasisSpec& spec, bool* clamped = nullptr);

struct DesignMatrix {
  Matrix values;  // N x d
  BasisSpec spec;
  Index clamped_rows = 0;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
  /// Q = (1/N) P'P.
  SymmetricMatrix gram() const;
};

/// Row i is eval_basis(X.row(i)). Throws InputError when N < d.
DesignMatrix design_matrix(const Matrix& x, const BasisSpec& spec);

/// max over grid rows of ||p(x)||_2, a grid lower bound for xi_d.
double sup_norm_xi(const BasisSpec& spec, const Matrix& grid);

}  // namespace lre
