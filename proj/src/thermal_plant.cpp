#include "rh/thermal_plant.hpp"

#include "rh/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace rh {

// ============================================================================
// Layout
// ============================================================================

std::string to_string(MarkGroup g) {
  switch (g) {
    case MarkGroup::top: return "top";
    case MarkGroup::bottom: return "bottom";
    case MarkGroup::edge: return "edge";
  }
  return "?";
}

MarkGroup mark_group_from_string(const std::string& s) {
  if (s == "top") return MarkGroup::top;
  if (s == "bottom") return MarkGroup::bottom;
  if (s == "edge") return MarkGroup::edge;
  throw ValidationError("unknown mark group '" + s + "' (expected top, bottom or edge)");
}

std::vector<Mark> MarkLayout::active() const {
  std::vector<Mark> out;
  for (const auto& m : marks)
    if (active_groups.count(m.group)) out.push_back(m);
  return out;
}

MarkLayout MarkLayout::with_groups(std::set<MarkGroup> groups) const {
  MarkLayout l = *this;
  l.active_groups = std::move(groups);
  return l;
}

MarkLayout standard_layout(const ImageArea& area, int per_side, int edge_per_side,
                           double offset_mm) {
  if (per_side < 1 || edge_per_side < 0)
    throw ValidationError("standard_layout: per_side must be >= 1 and edge_per_side >= 0");
  MarkLayout l;
  for (int i = 0; i < per_side; ++i) {
    const double x = per_side == 1 ? 0.5 * (area.x_min + area.x_max)
                                   : area.x_min + (area.x_max - area.x_min) * i / (per_side - 1);
    l.marks.push_back({x, area.y_max + offset_mm, MarkGroup::top});
    l.marks.push_back({x, area.y_min - offset_mm, MarkGroup::bottom});
  }
  for (int i = 1; i <= edge_per_side; ++i) {
    const double y = area.y_min + (area.y_max - area.y_min) * i / (edge_per_side + 1);
    l.marks.push_back({area.x_min - offset_mm, y, MarkGroup::edge});
    l.marks.push_back({area.x_max + offset_mm, y, MarkGroup::edge});
  }
  return l;
}

// ============================================================================
// Configuration
// ============================================================================

void PlantConfig::validate() const {
  if (grid_nx < 3 || grid_ny < 3) throw ValidationError("plant: grid_nx and grid_ny must be >= 3");
  if (!(reticle_side > 0.0)) throw ValidationError("plant: reticle_side must be > 0");
  const std::pair<const char*, double> rates[] = {{"diffusivity", diffusivity},
                                                  {"loss_ambient", loss_ambient},
                                                  {"clamp_conductance", clamp_conductance},
                                                  {"cooling_flow", cooling_flow},
                                                  {"absorption", absorption}};
  for (const auto& [name, v] : rates)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ValidationError(std::string("plant: ") + name + " must be a finite value >= 0");
  if (!(loss_ambient + cooling_flow > 0.0))
    throw ValidationError("plant: loss_ambient + cooling_flow must be > 0 (unclamped plant would not be stable)");
  if (!(pellicle_factor >= 1.0)) throw ValidationError("plant: pellicle_factor must be >= 1");
  if (!std::isfinite(expansion_coeff)) throw ValidationError("plant: expansion_coeff must be finite");
}

void ImageArea::validate(const PlantConfig& cfg) const {
  const double s = cfg.reticle_side;
  if (!(x_min >= 0.0 && x_max <= s && y_min >= 0.0 && y_max <= s && x_min < x_max && y_min < y_max)) {
    std::ostringstream os;
    os << "image area [" << x_min << ", " << x_max << "] x [" << y_min << ", " << y_max
       << "] mm is not a non-empty rectangle inside the " << s << " mm reticle";
    throw ValidationError(os.str());
  }
  if (!(exposure_power >= 0.0)) throw ValidationError("image area: exposure_power must be >= 0");
}

RegimeSpec standard_regime(int id, double reclamp_factor) {
  if (!(reclamp_factor >= 0.0)) throw ValidationError("reclamp_factor must be >= 0");
  switch (id) {
    case 0: return {0, 1.0, true, false, "nominal"};
    case 1: return {1, 0.0, false, false, "unclamped"};
    case 2: return {2, reclamp_factor, true, false, "reclamped"};
    case 3: return {3, 1.0, true, true, "pellicle"};
    case 4: return {4, reclamp_factor, true, true, "reclamped_pellicle"};
    default: break;
  }
  throw ValidationError("regime id " + std::to_string(id) + " has no standard meaning (0..4)");
}

// ============================================================================
// Plant assembly
// ============================================================================

const SpMat& FullOrderPlant::A(int regime) const {
  auto it = A_by_regime.find(regime);
  if (it == A_by_regime.end()) throw ValidationError("regime " + std::to_string(regime) + " not in plant");
  return it->second;
}

const Vec& FullOrderPlant::B_e(int regime) const {
  auto it = B_by_regime.find(regime);
  if (it == B_by_regime.end()) throw ValidationError("regime " + std::to_string(regime) + " not in plant");
  return it->second;
}

namespace {

double cz_entry(double dx, double dy, double w, double weight) {
  return std::exp(-(dx * dx + dy * dy) / (2.0 * w * w)) * weight;
}

}  // namespace

Mat assemble_cz_serial(const PlantConfig& c) {
  const int nx = c.grid_nx, ny = c.grid_ny, n = nx * ny;
  const double h = c.pitch(), w = 2.0 * h;
  const double weight = c.expansion_coeff * h * h / (2.0 * std::numbers::pi * w * w);
  Mat C(2 * n, n);
  for (int q = 0; q < n; ++q) {
    const double xq = (q % nx) * h, yq = (q / nx) * h;
    for (int p = 0; p < n; ++p) {
      const double dx = (p % nx) * h - xq, dy = (p / nx) * h - yq;
      const double g = cz_entry(dx, dy, w, weight);
      C(p, q) = dx * g;
      C(n + p, q) = dy * g;
    }
  }
  return C;
}

Mat assemble_cz(const PlantConfig& c) {
  const int nx = c.grid_nx, ny = c.grid_ny, n = nx * ny;
  const double h = c.pitch(), w = 2.0 * h;
  const double weight = c.expansion_coeff * h * h / (2.0 * std::numbers::pi * w * w);
  Mat C(2 * n, n);
#pragma omp parallel for schedule(static)
  for (int q = 0; q < n; ++q) {
    const double xq = (q % nx) * h, yq = (q / nx) * h;
    for (int p = 0; p < n; ++p) {
      const double dx = (p % nx) * h - xq, dy = (p / nx) * h - yq;
      const double g = cz_entry(dx, dy, w, weight);
      C(p, q) = dx * g;
      C(n + p, q) = dy * g;
    }
  }
  return C;
}

FullOrderPlant build_plant(const PlantConfig& config, const ImageArea& area,
                           const std::vector<RegimeSpec>& regimes) {
  config.validate();
  area.validate(config);
  if (regimes.empty()) throw ValidationError("build_plant: at least one regime required");

  FullOrderPlant P;
  P.config = config;
  P.area = area;
  const int nx = config.grid_nx, ny = config.grid_ny, n = nx * ny;
  const double h = config.pitch();
  P.n = n;
  P.node_x.resize(n);
  P.node_y.resize(n);
  for (int k = 0; k < n; ++k) {
    P.node_x(k) = (k % nx) * h;
    P.node_y(k) = (k / nx) * h;
  }

  Vec footprint = Vec::Zero(n);
  for (int k = 0; k < n; ++k)
    if (area.contains(P.node_x(k), P.node_y(k))) footprint(k) = 1.0;
  if (footprint.sum() == 0.0) throw ValidationError("image area contains no grid node");

  const double coup = config.diffusivity / (h * h);
  for (const auto& spec : regimes) {
    if (P.regimes.count(spec.id))
      throw ValidationError("duplicate regime id " + std::to_string(spec.id));
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * n);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int k = j * nx + i;
        double diag = -(config.loss_ambient + config.cooling_flow);
        const int di[] = {1, -1, 0, 0}, dj[] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
          const int ii = i + di[d], jj = j + dj[d];
          if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) continue;
          if (coup != 0.0) trip.emplace_back(k, jj * nx + ii, coup);
          diag -= coup;
        }
        if (i == 0 || i == nx - 1) diag -= config.clamp_conductance * spec.clamp_scale;
        trip.emplace_back(k, k, diag);
      }
    SpMat A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    P.A_by_regime.emplace(spec.id, std::move(A));

    double gain = spec.exposing ? config.absorption * area.exposure_power : 0.0;
    if (spec.pellicle) gain *= config.pellicle_factor;
    P.B_by_regime.emplace(spec.id, gain * footprint);
    P.regimes.emplace(spec.id, spec);
  }
  P.C_z = assemble_cz(config);
  return P;
}

Mat FullOrderPlant::sampling(const MarkLayout& layout) const {
  const auto marks = layout.active();
  const int m = static_cast<int>(marks.size());
  const int nx = config.grid_nx, ny = config.grid_ny;
  const double h = config.pitch(), side = config.reticle_side;
  Mat S = Mat::Zero(2 * m, 2 * n);
  for (int r = 0; r < m; ++r) {
    const double x = marks[r].x, y = marks[r].y;
    if (!(x >= 0.0 && x <= side && y >= 0.0 && y <= side)) {
      std::ostringstream os;
      os << "mark (" << x << ", " << y << ") mm lies outside the reticle";
      throw ValidationError(os.str());
    }
    const int i = std::min(static_cast<int>(std::floor(x / h)), nx - 2);
    const int j = std::min(static_cast<int>(std::floor(y / h)), ny - 2);
    const double fx = x / h - i, fy = y / h - j;
    const int k00 = j * nx + i;
    const std::pair<int, double> taps[] = {{k00, (1 - fx) * (1 - fy)},
                                           {k00 + 1, fx * (1 - fy)},
                                           {k00 + nx, (1 - fx) * fy},
                                           {k00 + nx + 1, fx * fy}};
    for (const auto& [k, wgt] : taps) {
      S(r, k) += wgt;
      S(m + r, n + k) += wgt;
    }
  }
  return S;
}

std::vector<int> FullOrderPlant::image_area_rows() const {
  std::vector<int> rows, ys;
  for (int p = 0; p < n; ++p)
    if (area.contains(node_x(p), node_y(p))) {
      rows.push_back(p);
      ys.push_back(n + p);
    }
  rows.insert(rows.end(), ys.begin(), ys.end());
  return rows;
}

// ============================================================================
// Stepping
// ============================================================================

Vec plant_step(const FullOrderPlant& plant, const Vec& state, double u_e, int regime, double dt) {
  PlantStepper st(plant, dt);
  return st.step(state, u_e, regime);
}

PlantStepper::PlantStepper(const FullOrderPlant& plant, double dt) : plant_(&plant), dt_(dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be > 0");
  SpMat I(plant.n, plant.n);
  I.setIdentity();
  for (const auto& [id, A] : plant.A_by_regime) {
    SpMat M = I - dt * A;
    auto& f = factors_[id];
    f.compute(M);
    if (f.info() != Eigen::Success)
      throw NumericalError("factorization of (I - dt*A) failed for regime " + std::to_string(id));
  }
}

Vec PlantStepper::step(const Vec& state, double u_e, int regime) const {
  auto it = factors_.find(regime);
  if (it == factors_.end()) throw ValidationError("regime " + std::to_string(regime) + " not in plant");
  Vec rhs = state;
  if (u_e != 0.0) rhs += dt_ * u_e * plant_->B_e(regime);
  return it->second.solve(rhs);
}

PlantOutputs plant_outputs(const FullOrderPlant& plant, const Vec& state, const MarkLayout& layout,
                           double noise_std, std::mt19937_64& rng) {
  if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be >= 0");
  PlantOutputs o;
  o.z = plant.C_z * state;
  o.y = plant.sampling(layout) * o.z;
  if (noise_std > 0.0) {
    std::normal_distribution<double> nd(0.0, noise_std);
    for (Eigen::Index i = 0; i < o.y.size(); ++i) o.y(i) += nd(rng);
  }
  return o;
}

}  // namespace rh
