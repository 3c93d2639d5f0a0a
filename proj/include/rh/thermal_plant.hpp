#pragma once

#include "rh/layout.hpp"
#include "rh/linalg.hpp"

#include <map>
#include <random>
#include <string>
#include <vector>

namespace rh {

// ============================================================================
// Configuration
// ============================================================================

struct PlantConfig {
  int grid_nx = 31;
  int grid_ny = 31;
  double reticle_side = 152.0;      // mm
  double diffusivity = 10.0;        // mm²/s
  double loss_ambient = 0.001;      // 1/s
  double clamp_conductance = 0.05;  // 1/s, boundary columns when clamped
  double cooling_flow = 0.001;      // 1/s
  double absorption = 0.1;          // K/(s·W)
  double pellicle_factor = 1.5;
  double expansion_coeff = 0.5;     // nm/(mm·K)

  void validate() const;
  [[nodiscard]] double pitch() const { return reticle_side / (grid_nx - 1); }
};

struct ImageArea {
  double x_min = 24.0, x_max = 128.0;  // mm
  double y_min = 10.0, y_max = 142.0;  // mm
  double exposure_power = 1.0;         // W

  void validate(const PlantConfig& cfg) const;
  [[nodiscard]] bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
};

/// Regime ids: 0 nominal, 1 unclamped, 2 reclamped, 3 pellicle,
/// 4 reclamped with pellicle.
struct RegimeSpec {
  int id = 0;
  double clamp_scale = 1.0;  // multiplies clamp_conductance
  bool exposing = true;      // false zeroes B_e
  bool pellicle = false;
  std::string label = "nominal";
};

/// Physical meaning of a standard regime id.
[[nodiscard]] RegimeSpec standard_regime(int id, double reclamp_factor = 0.5);

// ============================================================================
// Full-order plant
// ============================================================================

struct FullOrderPlant {
  PlantConfig config;
  ImageArea area;
  int n = 0;
  std::map<int, RegimeSpec> regimes;
  std::map<int, SpMat> A_by_regime;  // symmetric, Hurwitz
  std::map<int, Vec> B_by_regime;    // exposure footprint per regime
  Mat C_z;                           // (2·n) × n, x rows then y rows
  Vec node_x, node_y;                // node coordinates, mm (also the eval grid)

  [[nodiscard]] const SpMat& A(int regime) const;
  [[nodiscard]] const Vec& B_e(int regime) const;
  [[nodiscard]] Mat A_dense(int regime) const { return Mat(A(regime)); }
  [[nodiscard]] int n_eval() const { return n; }

  /// Mark-sampling selector S (2·m × 2·n_eval), bilinear on the eval grid,
  /// active marks only; x rows of all marks first, then y rows.
  [[nodiscard]] Mat sampling(const MarkLayout& layout) const;
  /// C_y(layout) = S·C_z.
  [[nodiscard]] Mat C_y(const MarkLayout& layout) const { return sampling(layout) * C_z; }

  /// Eval points inside the image area, as a mask over the 2·n_eval outputs.
  [[nodiscard]] std::vector<int> image_area_rows() const;
};

[[nodiscard]] FullOrderPlant build_plant(const PlantConfig& config, const ImageArea& area,
                                         const std::vector<RegimeSpec>& regimes);

/// C_z kernel assembly. The OpenMP kernel and the serial reference must agree
/// bitwise; each entry is computed independently.
[[nodiscard]] Mat assemble_cz(const PlantConfig& config);
[[nodiscard]] Mat assemble_cz_serial(const PlantConfig& config);

// ============================================================================
// Time stepping and outputs
// ============================================================================

/// One implicit-Euler step; factors (I − dt·A) on every call.
[[nodiscard]] Vec plant_step(const FullOrderPlant& plant, const Vec& state, double u_e, int regime,
                             double dt);

/// Prefactored implicit Euler for repeated stepping at a fixed dt.
class PlantStepper {
 public:
  PlantStepper(const FullOrderPlant& plant, double dt);
  [[nodiscard]] Vec step(const Vec& state, double u_e, int regime) const;
  [[nodiscard]] double dt() const { return dt_; }

 private:
  const FullOrderPlant* plant_;
  double dt_;
  std::map<int, Eigen::SimplicialLDLT<SpMat>> factors_;
};

struct PlantOutputs {
  Vec z;  // dense overlay field, nm
  Vec y;  // mark measurements, nm
};

/// z = C_z·x (noise free); y = C_y·x + N(0, noise_std²).
[[nodiscard]] PlantOutputs plant_outputs(const FullOrderPlant& plant, const Vec& state,
                                         const MarkLayout& layout, double noise_std,
                                         std::mt19937_64& rng);

}  // namespace rh
