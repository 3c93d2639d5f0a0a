#pragma once

#include "rh/linalg.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rh {

struct FullOrderPlant;

struct StateSpaceModel {
  Mat A;    // r × r
  Mat B_e;  // r × 1
  Mat B_f;  // r × m_f, empty until a feedback gain is designed
  Mat C;    // p × r
  std::string input_label = "u_e";
  std::string output_label = "z";

  [[nodiscard]] Eigen::Index order() const { return A.rows(); }
  [[nodiscard]] Eigen::Index outputs() const { return C.rows(); }
  void validate() const;
  /// H(s) on the u_e channel.
  [[nodiscard]] CMat response(std::complex<double> s) const;
};

/// (A_by_regime[regime], B_e(regime), C_z) as a dense model.
[[nodiscard]] StateSpaceModel plant_model(const FullOrderPlant& plant, int regime);

struct ReducedModel {
  StateSpaceModel ssm;
  int regime = 0;
  Mat V;  // n × r, orthonormal
  double s0 = 0.0;
  int k_moments = 3;
  bool stabilized = false;
  std::vector<std::string> warnings;
};

/// m_j = (−1)^j · C·(s0·I − A)^−(j+1)·B_e, j = 0..k−1: the Taylor coefficients
/// of H(s0 + σ) in σ. A scalar 1/(s+1) at s0 = 0 gives 1, −1, 1.
[[nodiscard]] std::vector<Mat> compute_moments(const StateSpaceModel& model, double s0, int k);

/// One-sided Krylov projection matching k moments at s0. `start` replaces
/// B_e as the Krylov starting block (used when a regime's B_e is zero).
[[nodiscard]] ReducedModel krylov_reduce(const StateSpaceModel& model, double s0, int k = 3,
                                         const std::optional<Mat>& start = std::nullopt,
                                         int regime = 0);

/// Per-moment relative error max(|Δm|)/max(max|m_full|, eps).
[[nodiscard]] std::vector<double> moment_errors(const StateSpaceModel& full,
                                                const ReducedModel& reduced, double eps = 1e-300);

// ============================================================================
// Centering
// ============================================================================

struct DeltaEntry {
  StateSpaceModel delta;  // (M_i − M_n)/scaling, or the zero system
  double scaling = 0.0;   // ‖M_i − M_n‖_∞
};

struct ModelFamily {
  ReducedModel nominal;
  std::map<int, ReducedModel> members;  // includes regime 0 == nominal
  std::map<int, DeltaEntry> deltas;     // one per non-nominal member

  [[nodiscard]] const ReducedModel& member(int regime) const;
  /// (M_n + scaling_i·Δ_i)(s), the centered reconstruction of member i.
  [[nodiscard]] CMat reconstruct(int regime, std::complex<double> s) const;
};

/// Parallel difference M_a − M_b on the u_e channel.
[[nodiscard]] StateSpaceModel parallel_difference(const StateSpaceModel& a, const StateSpaceModel& b);

[[nodiscard]] ModelFamily center_models(const std::map<int, ReducedModel>& members);

// ============================================================================
// Serialization: first line is a one-line JSON header, then matrix dumps of
// A, B_e, B_f, C and V in that order.
// ============================================================================

void save_reduced_model(const std::filesystem::path& path, const ReducedModel& m, double scaling);
[[nodiscard]] ReducedModel load_reduced_model(const std::filesystem::path& path,
                                              double* scaling = nullptr);

}  // namespace rh
