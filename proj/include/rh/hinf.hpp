#pragma once

#include "rh/linalg.hpp"

namespace rh {

struct StateSpaceModel;

/// G(s) = C (sI − A)⁻¹ B + D.
struct LtiSystem {
  Mat A, B, C, D;

  [[nodiscard]] static LtiSystem from(const StateSpaceModel& m);
  [[nodiscard]] static LtiSystem gain(const Mat& D);
  void validate() const;
  [[nodiscard]] CMat response(std::complex<double> s) const;
};

struct HinfOptions {
  double tol = 1e-4;      // relative
  int grid_points = 1000; // log-spaced, plus ω = 0
  double decades_pad = 2; // grid spans |λ|min/10^pad .. |λ|max·10^pad
  bool parallel = true;
};

struct HinfResult {
  double gamma = 0.0;
  double omega_peak = 0.0;  // rad/s; +inf when the peak is the feedthrough limit
  double omega_min = 0.0, omega_max = 0.0;
  int grid_points = 0;
  double tol = 0.0;
};

/// σ_max(G(jω)).
[[nodiscard]] double peak_gain_at(const LtiSystem& sys, double omega);

/// Peak gain over ω ∈ [0, ∞): log-grid sweep anchored to the spectrum of A,
/// then golden-section refinement around the best grid point. Throws
/// NumericalError("norm infinite") for a system that is not Hurwitz.
[[nodiscard]] HinfResult hinf_norm(const LtiSystem& sys, const HinfOptions& opt = {});
[[nodiscard]] HinfResult hinf_norm(const StateSpaceModel& sys, const HinfOptions& opt = {});

/// Serial sweep, kept as the reference for the OpenMP kernel.
[[nodiscard]] HinfResult hinf_norm_serial(const LtiSystem& sys, const HinfOptions& opt = {});

}  // namespace rh
