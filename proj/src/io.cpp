#include "lre/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace lre {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Index CsvTable::find(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<Index>(j);
  return -1;
}

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw InputError("csv: empty input, a header row is required");
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  t.header = split(line);
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (t.header[j].empty()) throw InputError("csv: empty column name in header, column " + std::to_string(j + 1));
    for (std::size_t k = 0; k < j; ++k)
      if (t.header[k] == t.header[j]) throw InputError("csv: duplicate column '" + t.header[j] + "'");
  }

  std::vector<double> cells;
  Index rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != t.header.size()) {
      std::ostringstream os;
      os << "csv: line " << line_no << " has " << fields.size() << " fields, header has " << t.header.size();
      throw InputError(os.str());
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const std::string& f = fields[j];
      double v = 0.0;
      const char* first = f.data();
      if (!f.empty() && f[0] == '+') ++first;
      const auto res = std::from_chars(first, f.data() + f.size(), v);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        std::ostringstream os;
        os << "csv: line " << line_no << ", column '" << t.header[j] << "': '" << f << "' is not a number";
        throw InputError(os.str());
      }
      cells.push_back(v);
    }
    ++rows;
  }
  const auto cols = static_cast<Index>(t.header.size());
  t.values.resize(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) t.values(i, j) = cells[static_cast<std::size_t>(i * cols + j)];
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("csv: cannot open '" + path + "'");
  return read_csv(in);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values) {
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

namespace {

std::vector<Index> numbered(const CsvTable& t, const std::string& prefix) {
  std::vector<Index> cols;
  for (int k = 1;; ++k) {
    const Index j = t.find(prefix + std::to_string(k));
    if (j < 0) break;
    cols.push_back(j);
  }
  return cols;
}

Matrix gather(const CsvTable& t, const std::vector<Index>& cols) {
  Matrix m(t.values.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) m.col(static_cast<Index>(k)) = t.values.col(cols[k]);
  return m;
}

}  // namespace

Dataset dataset_from_csv(const CsvTable& table, SignalKind kind) {
  std::vector<std::string> missing;
  auto need = [&](const std::string& name) {
    const Index j = table.find(name);
    if (j < 0) missing.push_back(name);
    return j;
  };
  const bool capd = kind == SignalKind::robust_capd;
  const Index jy = need("y_o");
  const Index jd = capd ? table.find("d") : need("d");
  const Index jt = kind == SignalKind::robust_cate_missing ? need("t") : -1;
  const Index jw = capd ? need("w") : -1;
  const auto xs = numbered(table, "x");
  const auto zs = numbered(table, "z");
  if (xs.empty()) missing.push_back("x1");
  if (zs.empty()) missing.push_back("z1");
  if (!missing.empty()) {
    std::ostringstream os;
    os << "dataset: signal kind " << to_string(kind) << " needs column(s)";
    for (const auto& m : missing) os << ' ' << m;
    os << "; file has";
    for (const auto& h : table.header) os << ' ' << h;
    throw InputError(os.str());
  }

  Dataset data;
  data.y_o = table.values.col(jy);
  data.d = jd >= 0 ? Vector(table.values.col(jd)) : Vector::Ones(table.values.rows());
  if (jt >= 0) data.t = Vector(table.values.col(jt));
  if (jw >= 0) data.w = Vector(table.values.col(jw));
  if (const Index js = table.find("y_star"); js >= 0) data.y_star = Vector(table.values.col(js));
  data.x = gather(table, xs);
  data.z = gather(table, zs);
  data.validate();
  return data;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  std::vector<std::string> header;
  std::vector<Vector> cols;
  if (data.y_star) {
    header.push_back("y_star");
    cols.push_back(*data.y_star);
  }
  header.push_back("y_o");
  cols.push_back(data.y_o);
  header.push_back("d");
  cols.push_back(data.d);
  if (data.t) {
    header.push_back("t");
    cols.push_back(*data.t);
  }
  if (data.w) {
    header.push_back("w");
    cols.push_back(*data.w);
  }
  Matrix m(data.size(), static_cast<Index>(cols.size()) + data.x.cols() + data.z.cols());
  for (std::size_t k = 0; k < cols.size(); ++k) m.col(static_cast<Index>(k)) = cols[k];
  Index off = static_cast<Index>(cols.size());
  for (Index j = 0; j < data.x.cols(); ++j) header.push_back("x" + std::to_string(j + 1));
  m.middleCols(off, data.x.cols()) = data.x;
  off += data.x.cols();
  for (Index j = 0; j < data.z.cols(); ++j) header.push_back("z" + std::to_string(j + 1));
  m.middleCols(off, data.z.cols()) = data.z;
  write_csv(out, header, m);
}

void write_band_csv(std::ostream& out, const BandResult& band) {
  const Index r = band.grid.cols();
  std::vector<std::string> header;
  if (r == 1) {
    header.push_back("x");
  } else {
    for (Index j = 0; j < r; ++j) header.push_back("x" + std::to_string(j + 1));
  }
  for (const char* h : {"g_hat", "e_hat", "pw_lo", "pw_hi", "unif_lo", "unif_hi"}) header.push_back(h);
  Matrix m(band.grid.rows(), r + 6);
  m.leftCols(r) = band.grid;
  m.col(r) = band.g_hat;
  m.col(r + 1) = band.e_hat;
  m.col(r + 2) = band.pw_lo;
  m.col(r + 3) = band.pw_hi;
  m.col(r + 4) = band.unif_lo;
  m.col(r + 5) = band.unif_hi;
  write_csv(out, header, m);
}

namespace {

Json vec_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json mat_json(const Matrix& m) {
  Json a = Json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

}  // namespace

Json band_json(const BandResult& band) {
  Json j;
  j["t_star"] = band.t_star;
  j["z_crit"] = band.z_crit;
  j["B"] = band.draws;
  j["alpha"] = band.alpha;
  j["n"] = band.n;
  j["grid_points"] = band.grid.rows();
  j["bootstrap_retries"] = band.retries;
  return j;
}

Json basis_json(const BasisSpec& spec) {
  Json j;
  j["kind"] = spec.kind == BasisKind::polynomial ? "polynomial" : "bspline";
  j["degree"] = spec.degree;
  j["dim"] = spec.dim;
  j["intercept"] = spec.include_intercept;
  if (spec.kind == BasisKind::bspline) {
    j["lower"] = spec.lower;
    j["upper"] = spec.upper;
    j["knots"] = spec.knots;
  }
  return j;
}

Json fit_json(const LREFit& fit, const Diagnostics& diag) {
  Json j;
  j["n"] = fit.n;
  j["basis"] = basis_json(fit.spec);
  j["beta"] = vec_json(fit.beta);
  j["se"] = vec_json((fit.omega.matrix().diagonal().cwiseMax(0.0) / static_cast<double>(fit.n)).cwiseSqrt());
  j["Q"] = mat_json(fit.q.matrix());
  j["Omega"] = mat_json(fit.omega.matrix());
  Json d;
  d["min_eigenvalue"] = diag.min_eigenvalue;
  d["max_eigenvalue"] = diag.max_eigenvalue;
  d["condition_number"] = diag.condition_number;
  d["singular"] = diag.singular;
  d["xi"] = diag.xi;
  if (diag.trim_binding_fraction) d["trim_binding_fraction"] = *diag.trim_binding_fraction;
  j["diagnostics"] = d;
  return j;
}

void write_mc_csv(std::ostream& out, const McSummary& s, Index max_rows) {
  const Index rows = std::min<Index>(max_rows, s.beta0.size());
  out << "coef,beta0";
  const char* stats[] = {"bias", "se", "rmse", "rej"};
  for (const char* st : stats)
    for (const auto& e : s.estimators) out << ',' << st << '_' << to_string(e.estimator);
  out << '\n';
  for (Index j = 0; j < rows; ++j) {
    out << "beta" << (j + 1) << ',' << format_double(s.beta0(j));
    for (int k = 0; k < 4; ++k) {
      for (const auto& e : s.estimators) {
        const Vector& v = k == 0 ? e.bias : k == 1 ? e.sd : k == 2 ? e.rmse : e.rejection;
        out << ',' << format_double(v(j));
      }
    }
    out << '\n';
  }
}

Json mc_json(const McSummary& s) {
  Json design;
  design["N"] = s.config.n;
  design["dimZ"] = s.config.dim_z;
  design["rho"] = s.config.rho;
  design["c"] = s.config.c;
  design["d"] = s.config.d;
  design["delta_support"] = s.config.delta_support;
  design["theta_support"] = s.config.theta_support;
  design["delta_scale"] = s.config.delta_scale;
  design["noise_sd"] = s.config.noise_sd;
  design["force_present"] = s.config.force_present;

  Json j;
  j["design"] = design;
  j["population_r2"] = s.config.population_r2();
  j["reps"] = s.reps;
  j["alpha"] = s.alpha;
  j["folds"] = s.folds;
  j["beta0"] = vec_json(s.beta0);
  j["failures"] = s.failures;
  j["variance"] = "heteroskedasticity-robust sandwich G^-1 E_N[w^2 e^2 p p'] G^-1 / N; w = D (OLS), D/s (IPW), 1 with the robust signal (LRE)";
  Json est = Json::object();
  for (const auto& e : s.estimators) {
    Json r;
    r["bias"] = vec_json(e.bias);
    r["sd"] = vec_json(e.sd);
    r["rmse"] = vec_json(e.rmse);
    r["rejection"] = vec_json(e.rejection);
    r["mean_se"] = vec_json(e.mean_se);
    est[std::string(to_string(e.estimator))] = r;
  }
  j["estimators"] = est;
  return j;
}

}  // namespace lre
