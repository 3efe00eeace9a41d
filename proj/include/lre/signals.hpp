#pragma once

#include <string>
#include <string_view>

#include "lre/dataset.hpp"

namespace lre {

enum class SignalKind {
  robust_missing,
  robust_cate,
  robust_cate_missing,
  robust_capd,
  ipw_missing,
  ipw_cate,
};

std::string_view to_string(SignalKind kind);
/// Accepts the snake_case names above and the CamelCase forms
/// ("RobustMissing", ...). Throws InputError otherwise.
SignalKind parse_signal_kind(std::string_view name);
bool is_robust(SignalKind kind);

// Scalar signal formulas. All throw DomainError on propensities outside the
// stated ranges.

/// mu + d (y_o - mu) / s, s in (0, 1].
double signal_missing(double y_o, double d, double mu, double s);
/// mu1 - mu0 + d (y_o - mu1) / s - (1 - d) (y_o - mu0) / (1 - s), s in (0, 1).
double signal_cate(double y_o, double d, double mu1, double mu0, double s);
/// mu1 - mu0 + d t (y_o - mu1) / (s h) - d (1 - t) (y_o - mu0) / (s (1 - h)),
/// s in (0, 1], h in (0, 1).
double signal_cate_missing(double y_o, double d, double t, double mu1, double mu0, double s,
                           double h);
/// -dlogf (y_o - mu) + dmu.
double signal_capd(double y_o, double dlogf, double mu, double dmu);
/// d y_o / s.
double signal_ipw_missing(double y_o, double d, double s);
/// (d - s) y_o / (s (1 - s)).
double signal_ipw_cate(double y_o, double d, double s);

/// Nuisance values evaluated at each observation. Only the slots the signal
/// kind reads need to be filled:
///   robust_missing       mu, s
///   robust_cate          mu1, mu0, s
///   robust_cate_missing  mu1, mu0, s (at the observed T), h
///   robust_capd          mu, dmu, dlogf
///   ipw_missing/ipw_cate s
struct NuisanceEvaluations {
  Vector mu, mu1, mu0, s, h, dlogf, dmu;

  static NuisanceEvaluations sized(Index n);
};

/// Elementwise signal. Domain errors are rethrown naming the offending row.
Vector build_signals(const Dataset& data, const NuisanceEvaluations& eval, SignalKind kind);

}  // namespace lre
