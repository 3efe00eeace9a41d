#include "lre/signals.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace lre {

std::string_view to_string(SignalKind kind) {
  switch (kind) {
    case SignalKind::robust_missing: return "robust_missing";
    case SignalKind::robust_cate: return "robust_cate";
    case SignalKind::robust_cate_missing: return "robust_cate_missing";
    case SignalKind::robust_capd: return "robust_capd";
    case SignalKind::ipw_missing: return "ipw_missing";
    case SignalKind::ipw_cate: return "ipw_cate";
  }
  return "unknown";
}

SignalKind parse_signal_kind(std::string_view name) {
  struct Entry {
    std::string_view snake, camel;
    SignalKind kind;
  };
  static constexpr Entry table[] = {
      {"robust_missing", "RobustMissing", SignalKind::robust_missing},
      {"robust_cate", "RobustCATE", SignalKind::robust_cate},
      {"robust_cate_missing", "RobustCATEMissing", SignalKind::robust_cate_missing},
      {"robust_capd", "RobustCAPD", SignalKind::robust_capd},
      {"ipw_missing", "IPWMissing", SignalKind::ipw_missing},
      {"ipw_cate", "IPWCATE", SignalKind::ipw_cate},
  };
  for (const auto& e : table)
    if (name == e.snake || name == e.camel) return e.kind;
  throw InputError("unknown signal kind '" + std::string(name) + "'");
}

bool is_robust(SignalKind kind) {
  return kind != SignalKind::ipw_missing && kind != SignalKind::ipw_cate;
}

namespace {

[[noreturn]] void domain(const char* op, const char* what, double value) {
  std::ostringstream os;
  os << op << ": " << what << " (got " << value << ")";
  throw DomainError(os.str());
}

}  // namespace

double signal_missing(double y_o, double d, double mu, double s) {
  if (!(s > 0.0 && s <= 1.0)) domain("signal_missing", "propensity must lie in (0, 1]", s);
  return mu + d * (y_o - mu) / s;
}

double signal_cate(double y_o, double d, double mu1, double mu0, double s) {
  if (!(s > 0.0 && s < 1.0)) domain("signal_cate", "propensity must lie in (0, 1)", s);
  return mu1 - mu0 + d * (y_o - mu1) / s - (1.0 - d) * (y_o - mu0) / (1.0 - s);
}

double signal_cate_missing(double y_o, double d, double t, double mu1, double mu0, double s,
                           double h) {
  if (!(s > 0.0 && s <= 1.0)) domain("signal_cate_missing", "presence propensity must lie in (0, 1]", s);
  if (!(h > 0.0 && h < 1.0)) domain("signal_cate_missing", "treatment propensity must lie in (0, 1)", h);
  return mu1 - mu0 + d * t * (y_o - mu1) / (s * h) - d * (1.0 - t) * (y_o - mu0) / (s * (1.0 - h));
}

double signal_capd(double y_o, double dlogf, double mu, double dmu) {
  if (!std::isfinite(y_o) || !std::isfinite(dlogf) || !std::isfinite(mu) || !std::isfinite(dmu))
    throw DomainError("signal_capd: non-finite input");
  return -dlogf * (y_o - mu) + dmu;
}

double signal_ipw_missing(double y_o, double d, double s) {
  if (!(s > 0.0 && s <= 1.0)) domain("signal_ipw_missing", "propensity must lie in (0, 1]", s);
  return d * y_o / s;
}

double signal_ipw_cate(double y_o, double d, double s) {
  if (!(s > 0.0 && s < 1.0)) domain("signal_ipw_cate", "propensity must lie in (0, 1)", s);
  return (d - s) * y_o / (s * (1.0 - s));
}

NuisanceEvaluations NuisanceEvaluations::sized(Index n) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  NuisanceEvaluations e;
  for (Vector* v : {&e.mu, &e.mu1, &e.mu0, &e.s, &e.h, &e.dlogf, &e.dmu}) *v = Vector::Constant(n, nan);
  return e;
}

Vector build_signals(const Dataset& data, const NuisanceEvaluations& eval, SignalKind kind) {
  const Index n = data.size();
  auto need = [&](const Vector& v, const char* name) {
    if (v.size() != n) {
      std::ostringstream os;
      os << "build_signals: nuisance '" << name << "' has " << v.size() << " values for " << n << " rows";
      throw InputError(os.str());
    }
  };
  switch (kind) {
    case SignalKind::robust_missing: need(eval.mu, "mu"); need(eval.s, "s"); break;
    case SignalKind::robust_cate: need(eval.mu1, "mu1"); need(eval.mu0, "mu0"); need(eval.s, "s"); break;
    case SignalKind::robust_cate_missing:
      need(eval.mu1, "mu1"); need(eval.mu0, "mu0"); need(eval.s, "s"); need(eval.h, "h");
      if (!data.t) throw InputError("build_signals: robust_cate_missing needs the treatment column t");
      break;
    case SignalKind::robust_capd: need(eval.mu, "mu"); need(eval.dmu, "dmu"); need(eval.dlogf, "dlogf"); break;
    case SignalKind::ipw_missing:
    case SignalKind::ipw_cate: need(eval.s, "s"); break;
  }

  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    try {
      const double y = data.y_o(i), d = data.d(i);
      switch (kind) {
        case SignalKind::robust_missing: out(i) = signal_missing(y, d, eval.mu(i), eval.s(i)); break;
        case SignalKind::robust_cate: out(i) = signal_cate(y, d, eval.mu1(i), eval.mu0(i), eval.s(i)); break;
        case SignalKind::robust_cate_missing:
          out(i) = signal_cate_missing(y, d, (*data.t)(i), eval.mu1(i), eval.mu0(i), eval.s(i), eval.h(i));
          break;
        case SignalKind::robust_capd: out(i) = signal_capd(y, eval.dlogf(i), eval.mu(i), eval.dmu(i)); break;
        case SignalKind::ipw_missing: out(i) = signal_ipw_missing(y, d, eval.s(i)); break;
        case SignalKind::ipw_cate: out(i) = signal_ipw_cate(y, d, eval.s(i)); break;
      }
    } catch (const DomainError& e) {
      std::ostringstream os;
      os << "row " << i << ": " << e.what();
      throw DomainError(os.str());
    }
  }
  return out;
}

}  // namespace lre
