#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lre/numerics.hpp"

namespace lre {

/// Observed sample. `d` is the presence indicator (missing-outcome kinds) or
/// the treatment indicator (CATE kinds); `t` is the randomized treatment of
/// the experiment-with-missingness kind; `w` is the continuous variable whose
/// partial derivative the CAPD kind targets. `y_star` is only carried by
/// simulated data.
struct Dataset {
  Vector y_o;
  Vector d;
  std::optional<Vector> t;
  std::optional<Vector> w;
  std::optional<Vector> y_star;
  Matrix x;
  Matrix z;

  Index size() const { return y_o.size(); }
  /// Throws InputError on misaligned lengths, non-finite values or
  /// non-binary indicators.
  void validate() const;
  /// Rows in `rows`, in order.
  Dataset subset(const std::vector<Index>& rows) const;
};

}  // namespace lre
