#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lre/io.hpp"

namespace lre::cli {

enum ExitCode { ok = 0, input_error = 2, numerical_error = 3, internal_error = 4 };

struct GridSpec {
  int points = 25;
  std::optional<double> lower, upper;  // default: range of x1
  std::vector<std::vector<double>> values;  // explicit points override the range
};

struct RunConfig {
  std::uint64_t seed = 20240101;
  std::string input;
  std::string output;  // path stem; empty writes the main result to stdout
  SignalKind signal = SignalKind::robust_missing;

  // Basis. "bspline" with n_knots > 0 and no knots places them at quantiles.
  BasisKind basis_kind = BasisKind::polynomial;
  int degree = 1;  // polynomial degree or B-spline order
  bool intercept = true;
  std::vector<double> knots;
  int n_knots = 0;
  std::optional<double> basis_lower, basis_upper;

  FirstStageConfig first_stage;
  int folds = 5;
  int bootstrap = 200;
  double alpha = 0.05;
  GridSpec grid;

  DesignConfig design;
  int reps = 300;
  std::vector<Estimator> estimators{Estimator::ols, Estimator::ipw, Estimator::lre};
};

/// Preset names: table1, table2, smoke. Throws InputError otherwise.
void apply_preset(RunConfig& cfg, const std::string& name);

/// Overlays a JSON config document. Unknown keys and ill-typed values raise
/// InputError naming the offending path.
void apply_config(RunConfig& cfg, const Json& doc);

/// Full command-line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lre::cli
