#include "lre/dataset.hpp"

#include <sstream>

namespace lre {

namespace {

void check_binary(const Vector& v, const char* name) {
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) != 0.0 && v(i) != 1.0) {
      std::ostringstream os;
      os << "dataset: column '" << name << "' must be 0/1 (row " << i << " has " << v(i) << ")";
      throw InputError(os.str());
    }
  }
}

void check_column(const Vector& v, Index n, const char* name) {
  if (v.size() != n) {
    std::ostringstream os;
    os << "dataset: column '" << name << "' has " << v.size() << " rows, expected " << n;
    throw InputError(os.str());
  }
  if (!v.allFinite()) throw InputError(std::string("dataset: column '") + name + "' has non-finite values");
}

}  // namespace

void Dataset::validate() const {
  const Index n = y_o.size();
  check_column(y_o, n, "y_o");
  check_column(d, n, "d");
  check_binary(d, "d");
  if (t) {
    check_column(*t, n, "t");
    check_binary(*t, "t");
  }
  if (w) check_column(*w, n, "w");
  if (y_star) check_column(*y_star, n, "y_star");
  if (x.rows() != n || z.rows() != n) throw InputError("dataset: X and Z must have one row per observation");
  if (!x.allFinite() || !z.allFinite()) throw InputError("dataset: X or Z has non-finite values");
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  const auto m = static_cast<Index>(rows.size());
  auto pick = [&](const Vector& v) {
    Vector out(m);
    for (Index r = 0; r < m; ++r) out(r) = v(rows[r]);
    return out;
  };
  auto pick_rows = [&](const Matrix& a) {
    Matrix out(m, a.cols());
    for (Index r = 0; r < m; ++r) out.row(r) = a.row(rows[r]);
    return out;
  };
  Dataset s;
  s.y_o = pick(y_o);
  s.d = pick(d);
  if (t) s.t = pick(*t);
  if (w) s.w = pick(*w);
  if (y_star) s.y_star = pick(*y_star);
  s.x = pick_rows(x);
  s.z = pick_rows(z);
  return s;
}

}  // namespace lre
