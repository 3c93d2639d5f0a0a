#pragma once

#include "rh/layout.hpp"
#include "rh/linalg.hpp"

#include <vector>

namespace rh {

struct FullOrderPlant;

/// Thin-plate spline through (marks, values), evaluated at (qx, qy).
/// Needs at least three non-collinear marks.
[[nodiscard]] Vec tps_interpolate(const std::vector<Mark>& marks, const Vec& values, const Vec& qx,
                                  const Vec& qy);

/// Dense field estimate from measured marks (x rows then y rows in y),
/// interpolated per axis onto the plant's evaluation grid.
[[nodiscard]] Vec status_quo_field(const FullOrderPlant& plant, const MarkLayout& layout, const Vec& y);

}  // namespace rh
