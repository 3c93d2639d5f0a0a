#include "rh/status_quo.hpp"

#include "rh/errors.hpp"
#include "rh/thermal_plant.hpp"

#include <cmath>

namespace rh {

namespace {

double tps_kernel(double r2) { return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0; }  // r² log r

}  // namespace

Vec tps_interpolate(const std::vector<Mark>& marks, const Vec& values, const Vec& qx, const Vec& qy) {
  const auto m = static_cast<Eigen::Index>(marks.size());
  if (m < 3) throw ValidationError("status quo: at least three marks required");
  if (values.size() != m) throw ValidationError("status quo: value count differs from mark count");
  Mat K = Mat::Zero(m + 3, m + 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double dx = marks[i].x - marks[j].x, dy = marks[i].y - marks[j].y;
      K(i, j) = tps_kernel(dx * dx + dy * dy);
    }
    K(i, m) = K(m, i) = 1.0;
    K(i, m + 1) = K(m + 1, i) = marks[i].x;
    K(i, m + 2) = K(m + 2, i) = marks[i].y;
  }
  Vec rhs = Vec::Zero(m + 3);
  rhs.head(m) = values;
  Eigen::FullPivLU<Mat> lu(K);
  if (!lu.isInvertible()) throw ValidationError("status quo: marks are collinear");
  const Vec coef = lu.solve(rhs);
  Vec out(qx.size());
  for (Eigen::Index q = 0; q < qx.size(); ++q) {
    double v = coef(m) + coef(m + 1) * qx(q) + coef(m + 2) * qy(q);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double dx = qx(q) - marks[i].x, dy = qy(q) - marks[i].y;
      v += coef(i) * tps_kernel(dx * dx + dy * dy);
    }
    out(q) = v;
  }
  return out;
}

Vec status_quo_field(const FullOrderPlant& plant, const MarkLayout& layout, const Vec& y) {
  const auto marks = layout.active();
  const auto m = static_cast<Eigen::Index>(marks.size());
  if (y.size() != 2 * m) throw ValidationError("status quo: measurement length mismatch");
  Vec z(2 * plant.n);
  z.head(plant.n) = tps_interpolate(marks, y.head(m), plant.node_x, plant.node_y);
  z.tail(plant.n) = tps_interpolate(marks, y.tail(m), plant.node_x, plant.node_y);
  return z;
}

}  // namespace rh
