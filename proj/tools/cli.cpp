#include "cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace lre::cli {

namespace {

using Handler = std::function<void(const Json&, const std::string&)>;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw InputError("config: '" + path + "' " + what);
}

double as_number(const Json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "must be a number");
  return j.get<double>();
}

long long as_integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) bad(path, "must be an integer");
  return j.get<long long>();
}

int as_int(const Json& j, const std::string& path) {
  const long long v = as_integer(j, path);
  if (v < -2147483647LL || v > 2147483647LL) bad(path, "is out of range");
  return static_cast<int>(v);
}

bool as_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) bad(path, "must be true or false");
  return j.get<bool>();
}

std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) bad(path, "must be a string");
  return j.get<std::string>();
}

std::vector<double> as_numbers(const Json& j, const std::string& path) {
  if (!j.is_array()) bad(path, "must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

void walk(const Json& obj, const std::string& prefix, const std::map<std::string, Handler>& handlers) {
  if (!obj.is_object()) bad(prefix.empty() ? "<root>" : prefix, "must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    const auto h = handlers.find(it.key());
    if (h == handlers.end()) bad(path, "is not a recognized key");
    h->second(it.value(), path);
  }
}

Estimator parse_estimator(const std::string& s, const std::string& path) {
  if (s == "OLS" || s == "ols") return Estimator::ols;
  if (s == "IPW" || s == "ipw") return Estimator::ipw;
  if (s == "LRE" || s == "lre") return Estimator::lre;
  bad(path, "must be one of OLS, IPW, LRE");
}

}  // namespace

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "table1") {
    cfg.design = DesignConfig{};
    cfg.design.c = 0.1;
    cfg.alpha = 0.05;
    cfg.reps = 300;
  } else if (name == "table2") {
    cfg.design = DesignConfig{};
    cfg.design.c = 20.0;
    cfg.alpha = 0.1;
    cfg.reps = 300;
  } else if (name == "smoke") {
    cfg.design = DesignConfig{};
    cfg.design.dim_z = 20;
    cfg.reps = 2;
  } else {
    throw InputError("unknown preset '" + name + "' (expected table1, table2 or smoke)");
  }
}

void apply_config(RunConfig& cfg, const Json& doc) {
  std::map<std::string, Handler> basis{
      {"kind",
       [&](const Json& j, const std::string& p) {
         const std::string k = as_string(j, p);
         if (k == "polynomial") cfg.basis_kind = BasisKind::polynomial;
         else if (k == "bspline") cfg.basis_kind = BasisKind::bspline;
         else bad(p, "must be \"polynomial\" or \"bspline\"");
       }},
      {"degree", [&](const Json& j, const std::string& p) { cfg.degree = as_int(j, p); }},
      {"order", [&](const Json& j, const std::string& p) { cfg.degree = as_int(j, p); }},
      {"intercept", [&](const Json& j, const std::string& p) { cfg.intercept = as_bool(j, p); }},
      {"knots", [&](const Json& j, const std::string& p) { cfg.knots = as_numbers(j, p); }},
      {"n_knots", [&](const Json& j, const std::string& p) { cfg.n_knots = as_int(j, p); }},
      {"lower", [&](const Json& j, const std::string& p) { cfg.basis_lower = as_number(j, p); }},
      {"upper", [&](const Json& j, const std::string& p) { cfg.basis_upper = as_number(j, p); }},
  };
  std::map<std::string, Handler> first_stage{
      {"lambda",
       [&](const Json& j, const std::string& p) {
         if (j.is_string()) {
           if (j.get<std::string>() != "auto") bad(p, "must be \"auto\" or a number");
           cfg.first_stage.lambda.reset();
         } else {
           cfg.first_stage.lambda = as_number(j, p);
         }
       }},
      {"trim_floor", [&](const Json& j, const std::string& p) { cfg.first_stage.trim_floor = as_number(j, p); }},
      {"adaptive_kde", [&](const Json& j, const std::string& p) { cfg.first_stage.adaptive_kde = as_bool(j, p); }},
      {"post_selection", [&](const Json& j, const std::string& p) { cfg.first_stage.post_selection = as_bool(j, p); }},
  };
  std::map<std::string, Handler> crossfit{
      {"folds", [&](const Json& j, const std::string& p) { cfg.folds = as_int(j, p); }},
  };
  std::map<std::string, Handler> grid{
      {"points", [&](const Json& j, const std::string& p) { cfg.grid.points = as_int(j, p); }},
      {"lower", [&](const Json& j, const std::string& p) { cfg.grid.lower = as_number(j, p); }},
      {"upper", [&](const Json& j, const std::string& p) { cfg.grid.upper = as_number(j, p); }},
      {"values",
       [&](const Json& j, const std::string& p) {
         if (!j.is_array()) bad(p, "must be an array");
         cfg.grid.values.clear();
         for (std::size_t i = 0; i < j.size(); ++i) {
           const std::string q = p + "[" + std::to_string(i) + "]";
           cfg.grid.values.push_back(j[i].is_array() ? as_numbers(j[i], q) : std::vector<double>{as_number(j[i], q)});
         }
       }},
  };
  std::map<std::string, Handler> band{
      {"bootstrap", [&](const Json& j, const std::string& p) { cfg.bootstrap = as_int(j, p); }},
      {"alpha", [&](const Json& j, const std::string& p) { cfg.alpha = as_number(j, p); }},
      {"grid", [&](const Json& j, const std::string& p) { walk(j, p, grid); }},
  };
  std::map<std::string, Handler> design{
      {"N", [&](const Json& j, const std::string& p) { cfg.design.n = as_integer(j, p); }},
      {"dimZ", [&](const Json& j, const std::string& p) { cfg.design.dim_z = as_integer(j, p); }},
      {"rho", [&](const Json& j, const std::string& p) { cfg.design.rho = as_number(j, p); }},
      {"c", [&](const Json& j, const std::string& p) { cfg.design.c = as_number(j, p); }},
      {"d", [&](const Json& j, const std::string& p) { cfg.design.d = as_integer(j, p); }},
      {"delta_support", [&](const Json& j, const std::string& p) { cfg.design.delta_support = as_integer(j, p); }},
      {"theta_support", [&](const Json& j, const std::string& p) { cfg.design.theta_support = as_integer(j, p); }},
      {"delta_scale", [&](const Json& j, const std::string& p) { cfg.design.delta_scale = as_number(j, p); }},
      {"noise_sd", [&](const Json& j, const std::string& p) { cfg.design.noise_sd = as_number(j, p); }},
      {"force_present", [&](const Json& j, const std::string& p) { cfg.design.force_present = as_bool(j, p); }},
  };
  std::map<std::string, Handler> montecarlo{
      {"reps", [&](const Json& j, const std::string& p) { cfg.reps = as_int(j, p); }},
      {"alpha", [&](const Json& j, const std::string& p) { cfg.alpha = as_number(j, p); }},
      {"folds", [&](const Json& j, const std::string& p) { cfg.folds = as_int(j, p); }},
      {"estimators",
       [&](const Json& j, const std::string& p) {
         if (!j.is_array() || j.empty()) bad(p, "must be a non-empty array");
         std::set<Estimator> seen;
         for (std::size_t i = 0; i < j.size(); ++i) {
           const std::string q = p + "[" + std::to_string(i) + "]";
           seen.insert(parse_estimator(as_string(j[i], q), q));
         }
         cfg.estimators.assign(seen.begin(), seen.end());
       }},
  };
  std::map<std::string, Handler> root{
      {"seed",
       [&](const Json& j, const std::string& p) {
         if (!j.is_number_unsigned()) bad(p, "must be a non-negative integer");
         cfg.seed = j.get<std::uint64_t>();
       }},
      {"input", [&](const Json& j, const std::string& p) { cfg.input = as_string(j, p); }},
      {"output", [&](const Json& j, const std::string& p) { cfg.output = as_string(j, p); }},
      {"signal",
       [&](const Json& j, const std::string& p) {
         try {
           cfg.signal = parse_signal_kind(as_string(j, p));
         } catch (const InputError& e) {
           bad(p, e.what());
         }
       }},
      {"basis", [&](const Json& j, const std::string& p) { walk(j, p, basis); }},
      {"first_stage", [&](const Json& j, const std::string& p) { walk(j, p, first_stage); }},
      {"crossfit", [&](const Json& j, const std::string& p) { walk(j, p, crossfit); }},
      {"band", [&](const Json& j, const std::string& p) { walk(j, p, band); }},
      {"design", [&](const Json& j, const std::string& p) { walk(j, p, design); }},
      {"montecarlo", [&](const Json& j, const std::string& p) { walk(j, p, montecarlo); }},
  };
  walk(doc, "", root);
}

namespace {

void check_run_config(const RunConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw InputError("config: alpha must lie in (0, 1)");
  if (cfg.folds < 2) throw InputError("config: folds must be >= 2");
  if (cfg.bootstrap < 50) throw InputError("config: bootstrap must be >= 50");
  if (cfg.reps < 2) throw InputError("config: reps must be >= 2");
  if (cfg.grid.points < 1) throw InputError("config: grid points must be >= 1");
  if (!(cfg.first_stage.trim_floor > 0.0 && cfg.first_stage.trim_floor < 1.0))
    throw InputError("config: trim_floor must lie in (0, 1)");
  if (cfg.first_stage.lambda && !(*cfg.first_stage.lambda >= 0.0))
    throw InputError("config: lambda must be >= 0");
}

BasisSpec make_basis(const RunConfig& cfg, const Dataset& data) {
  const int r = static_cast<int>(data.x.cols());
  BasisSpec spec;
  if (cfg.basis_kind == BasisKind::polynomial) {
    spec = BasisSpec::polynomial(cfg.degree, r, cfg.intercept);
  } else {
    if (r != 1) throw InputError("config: B-spline basis needs exactly one x column, data has " + std::to_string(r));
    std::vector<double> x(data.x.col(0).data(), data.x.col(0).data() + data.size());
    if (cfg.knots.empty() && cfg.n_knots > 0 && !cfg.basis_lower && !cfg.basis_upper) {
      spec = BasisSpec::bspline_from_data(cfg.degree, cfg.n_knots, x, cfg.intercept);
    } else {
      const double lo = cfg.basis_lower.value_or(*std::min_element(x.begin(), x.end()));
      const double hi = cfg.basis_upper.value_or(*std::max_element(x.begin(), x.end()));
      std::vector<double> knots = cfg.knots;
      if (knots.empty())
        for (int k = 1; k <= cfg.n_knots; ++k) knots.push_back(lo + (hi - lo) * k / (cfg.n_knots + 1));
      spec = BasisSpec::bspline(cfg.degree, knots, lo, hi, cfg.intercept);
    }
  }
  spec.validate();
  return spec;
}

Matrix make_grid(const RunConfig& cfg, const Dataset& data, const BasisSpec& spec) {
  const Index r = data.x.cols();
  if (!cfg.grid.values.empty()) {
    Matrix g(static_cast<Index>(cfg.grid.values.size()), r);
    for (std::size_t i = 0; i < cfg.grid.values.size(); ++i) {
      if (static_cast<Index>(cfg.grid.values[i].size()) != r)
        throw InputError("config: grid point " + std::to_string(i) + " does not have " + std::to_string(r) + " coordinates");
      for (Index j = 0; j < r; ++j) g(static_cast<Index>(i), j) = cfg.grid.values[i][static_cast<std::size_t>(j)];
    }
    return g;
  }
  if (r != 1) throw InputError("config: band.grid.values is required when X has more than one column");
  double lo = data.x.col(0).minCoeff(), hi = data.x.col(0).maxCoeff();
  if (spec.kind == BasisKind::bspline) {
    lo = spec.lower;
    hi = spec.upper;
  }
  lo = cfg.grid.lower.value_or(lo);
  hi = cfg.grid.upper.value_or(hi);
  if (!(lo <= hi)) throw InputError("config: grid lower must not exceed upper");
  const int m = cfg.grid.points;
  Matrix g(m, 1);
  for (int i = 0; i < m; ++i) g(i, 0) = m == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (m - 1);
  return g;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
  if (!f) throw InputError("write to '" + path + "' failed");
}

struct Emitter {
  const RunConfig& cfg;
  std::ostream& out;
  // Main result goes to <stem><ext> or stdout; sidecars need a stem.
  void main(const std::string& ext, const std::string& text) const {
    if (cfg.output.empty()) out << text;
    else write_text(cfg.output + ext, text);
  }
  void sidecar(const std::string& ext, const std::string& text) const {
    if (!cfg.output.empty()) write_text(cfg.output + ext, text);
  }
};

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

struct Estimated {
  Dataset data;
  CrossFitResult cf;
  DesignMatrix p;
  LREFit fit;
  Matrix grid;
};

Estimated estimate_pipeline(const RunConfig& cfg) {
  if (cfg.input.empty()) throw InputError("no input CSV given (config key 'input')");
  Estimated e;
  e.data = dataset_from_csv(read_csv_file(cfg.input), cfg.signal);
  if (cfg.folds > e.data.size()) throw InputError("config: more folds than observations");
  const RngStream root(cfg.seed);
  RngStream fold_rng = root.substream(1);
  const FoldAssignment folds = make_folds(e.data.size(), cfg.folds, fold_rng);
  const PenalizedLearner learner(cfg.signal, cfg.first_stage);
  e.cf = crossfit_signals(e.data, folds, cfg.signal, learner);
  const BasisSpec spec = make_basis(cfg, e.data);
  e.p = design_matrix(e.data.x, spec);
  e.fit = fit_lre_full(e.p, e.cf.y_hat);
  e.grid = make_grid(cfg, e.data, spec);
  return e;
}

Json run_header(const RunConfig& cfg) {
  Json j;
  j["signal"] = std::string(to_string(cfg.signal));
  j["seed"] = cfg.seed;
  j["folds"] = cfg.folds;
  j["lambda"] = cfg.first_stage.lambda ? Json(*cfg.first_stage.lambda) : Json("auto");
  j["trim_floor"] = cfg.first_stage.trim_floor;
  j["adaptive_kde"] = cfg.first_stage.adaptive_kde;
  j["post_selection"] = cfg.first_stage.post_selection;
  return j;
}

void cmd_simulate(const RunConfig& cfg, const Emitter& em) {
  RngStream rng = RngStream(cfg.seed).substream(0);
  const Dataset data = gen_design(cfg.design, rng);
  std::ostringstream os;
  write_dataset_csv(os, data);
  em.main(".csv", os.str());
}

void cmd_estimate(const RunConfig& cfg, const Emitter& em) {
  const Estimated e = estimate_pipeline(cfg);
  Json j = run_header(cfg);
  const Diagnostics diag = diagnostics(e.fit, e.grid, e.cf.trim_binding_fraction);
  j.update(fit_json(e.fit, diag));
  j["clamped_rows"] = e.p.clamped_rows;
  em.main(".json", dump(j));
}

void cmd_band(const RunConfig& cfg, const Emitter& em) {
  const Estimated e = estimate_pipeline(cfg);
  BandOptions opt;
  opt.draws = cfg.bootstrap;
  opt.alpha = cfg.alpha;
  const BandResult band = uniform_band(e.fit, e.p, e.cf.y_hat, e.grid, opt, RngStream(cfg.seed).substream(2));
  std::ostringstream os;
  write_band_csv(os, band);
  em.main(".csv", os.str());
  Json j = run_header(cfg);
  j.update(band_json(band));
  const Diagnostics diag = diagnostics(e.fit, e.grid, e.cf.trim_binding_fraction);
  j.update(fit_json(e.fit, diag));
  em.sidecar(".json", dump(j));
}

void cmd_montecarlo(const RunConfig& cfg, const Emitter& em) {
  McOptions opt;
  opt.estimators = std::set<Estimator>(cfg.estimators.begin(), cfg.estimators.end());
  opt.first_stage = cfg.first_stage;
  const McSummary s = run_mc(cfg.design, cfg.reps, cfg.alpha, cfg.folds, RngStream(cfg.seed).substream(3), opt);
  std::ostringstream os;
  write_mc_csv(os, s);
  em.main(".csv", os.str());
  Json j = mc_json(s);
  j["seed"] = cfg.seed;
  em.sidecar(".json", dump(j));
}

void apply_thread_cap() {
  const char* env = std::getenv("LRE_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 4096) throw InputError(std::string("LRE_THREADS must be a positive integer, got '") + env + "'");
  omp_set_num_threads(static_cast<int>(n));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Locally robust series estimation and Monte Carlo tools", "lre"};
  app.require_subcommand(1);

  std::string config_path, preset, out_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps, folds, bootstrap;
  std::optional<double> alpha;
  std::optional<long long> dim_z;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out_path, "output path stem (default: stdout)");
    sub->add_option("--folds", folds, "cross-fitting folds K");
    sub->add_option("--alpha", alpha, "significance level");
  };
  auto* sim = app.add_subcommand("simulate", "draw a dataset from the simulation design");
  auto* est = app.add_subcommand("estimate", "fit the estimator on a CSV sample");
  auto* bnd = app.add_subcommand("band", "pointwise and uniform confidence bands");
  auto* mc = app.add_subcommand("montecarlo", "Monte Carlo comparison of OLS, IPW and LRE");
  for (auto* s : {sim, est, bnd, mc}) add_common(s);
  for (auto* s : {sim, mc}) {
    s->add_option("--preset", preset, "table1 | table2 | smoke");
    s->add_option("--dimZ", dim_z, "number of controls");
  }
  mc->add_option("--reps", reps, "Monte Carlo replications R");
  bnd->add_option("--bootstrap", bootstrap, "bootstrap draws B");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : input_error;
  }

  try {
    apply_thread_cap();
    RunConfig cfg;
    if (!preset.empty()) apply_preset(cfg, preset);
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      Json doc;
      try {
        doc = Json::parse(f);
      } catch (const Json::parse_error& e) {
        throw InputError("config: " + config_path + " is not valid JSON: " + e.what());
      }
      apply_config(cfg, doc);
    }
    if (seed) cfg.seed = *seed;
    if (!out_path.empty()) cfg.output = out_path;
    if (folds) cfg.folds = *folds;
    if (alpha) cfg.alpha = *alpha;
    if (reps) cfg.reps = *reps;
    if (bootstrap) cfg.bootstrap = *bootstrap;
    if (dim_z) cfg.design.dim_z = *dim_z;
    check_run_config(cfg);

    const Emitter em{cfg, out};
    if (sim->parsed()) cmd_simulate(cfg, em);
    else if (est->parsed()) cmd_estimate(cfg, em);
    else if (bnd->parsed()) cmd_band(cfg, em);
    else cmd_montecarlo(cfg, em);
    out.flush();
    return ok;
  } catch (const InputError& e) {
    err << "lre: input error: " << e.what() << '\n';
    return input_error;
  } catch (const SingularityError& e) {
    err << "lre: identification failure: " << e.what() << '\n';
    return numerical_error;
  } catch (const DegenerateFitError& e) {
    err << "lre: first stage failed: " << e.what() << '\n';
    return numerical_error;
  } catch (const DomainError& e) {
    err << "lre: numerical error: " << e.what() << '\n';
    return numerical_error;
  } catch (const std::exception& e) {
    err << "lre: internal error: " << e.what() << '\n';
    return internal_error;
  }
}

}  // namespace lre::cli
