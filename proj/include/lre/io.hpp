#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lre/crossfit.hpp"
#include "lre/dataset.hpp"
#include "lre/lre.hpp"
#include "lre/montecarlo.hpp"

namespace lre {

using Json = nlohmann::ordered_json;

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Comma-separated table with a header row and numeric cells.
struct CsvTable {
  std::vector<std::string> header;
  Matrix values;

  /// Column position, or -1.
  Index find(const std::string& name) const;
};

/// Throws InputError naming the line and column of the first bad cell.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values);

/// Column requirements: y_o, d, then x1..xr and z1..zp (at least one of
/// each), plus t for the CATE-with-missingness kind and w for CAPD. y_star
/// is optional. A missing column raises InputError listing what the file has.
Dataset dataset_from_csv(const CsvTable& table, SignalKind kind);
/// Columns: y_star (when present), y_o, d, t, w (when present), x1..xr, z1..zp.
void write_dataset_csv(std::ostream& out, const Dataset& data);

void write_band_csv(std::ostream& out, const BandResult& band);
Json band_json(const BandResult& band);

Json basis_json(const BasisSpec& spec);
/// Estimate report: beta, Q, Omega and diagnostics.
Json fit_json(const LREFit& fit, const Diagnostics& diag);

/// Table layout: one row per coefficient (first five), columns
/// Bias/SE/RMSE/Rej for OLS, IPW, LRE in turn.
void write_mc_csv(std::ostream& out, const McSummary& s, Index max_rows = 5);
Json mc_json(const McSummary& s);

}  // namespace lre
