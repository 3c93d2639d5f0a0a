#pragma once

#include "rh/hinf.hpp"
#include "rh/linalg.hpp"
#include "rh/model_reduction.hpp"

#include <json.hpp>

#include <map>
#include <vector>

namespace rh {

// ============================================================================
// Generalized plant
// ============================================================================

/// Closed loop of plant and nominal predictor with the uncertainty channel
/// pulled out.
///
///   states  x = (x_p, x̂)
///   inputs  u_e (exposure), u_f (measurement noise, enters through L_n),
///           u_i = (u_x, u_z) from Δ
///   outputs y_i = (x̂, y, u_e) seen by Δ, z = C_p x_p − C_n x̂ − u_z
struct GeneralizedPlant {
  Mat A;
  Mat B_e, B_f, B_i;
  Mat C_y, C_z;
  Mat D_ey, D_fy, D_iy;
  Mat D_fz, D_iz;
  Eigen::Index n_plant = 0, n_pred = 0;

  void validate() const;  // names the offending block
};

struct UncertaintyRealization {
  Mat A, B, C, D;  // dynamic in general; static when A is empty
  double delta_bound = 0.0;

  [[nodiscard]] LtiSystem system() const { return {A, B, C, D}; }
  [[nodiscard]] static UncertaintyRealization static_gain(const Mat& D, double bound);
};

/// Measurement selector and per-regime observer gains (zero for regimes
/// without measurements).
struct FeedbackGains {
  Mat S;
  std::map<int, Mat> L;
};

[[nodiscard]] GeneralizedPlant assemble_lft(const StateSpaceModel& plant, const ModelFamily& family,
                                            const FeedbackGains& gains);

/// Static Δ_i that turns the nominal loop into member i, written in the
/// nominal predictor's coordinates (x̂ = H·x_i, H = C_n⁺·C_i).
[[nodiscard]] Mat member_delta(const ModelFamily& family, const FeedbackGains& gains, int regime);

/// Closing u_i = Δ(y_i). Inputs (u_e, u_f), output z; states (x, x_Δ).
[[nodiscard]] LtiSystem close_lft(const GeneralizedPlant& gp, const UncertaintyRealization& delta);

/// Δ channels that close a loop: u_i columns that drive a state or y_i,
/// y_i rows that depend on them.
struct LoopChannels {
  std::vector<int> u_cols;
  std::vector<int> y_rows;
};
[[nodiscard]] LoopChannels loop_channels(const GeneralizedPlant& gp);

/// u_i → y_i on the loop channels, with structurally decoupled states trimmed.
[[nodiscard]] LtiSystem loop_transfer(const GeneralizedPlant& gp);

/// Restriction of a Δ realization to the loop channels.
[[nodiscard]] LtiSystem restrict_delta(const UncertaintyRealization& d, const LoopChannels& ch);

// ============================================================================
// Certificate
// ============================================================================

struct StabilityCertificate {
  double gamma = 0.0;
  double delta_bound = 0.0;
  double margin = 0.0;
  bool pass = false;
  HinfResult grid;
  double inflation = 1.0;
  std::vector<int> loop_regimes;
  std::vector<int> open_loop_regimes;
  std::map<int, double> member_delta;     // loop-relevant ‖Δ_i‖
  std::map<int, double> open_loop_abscissa;

  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] static StabilityCertificate from_json(const nlohmann::json& j);
};

/// Small-gain test γ·δ̄ < 1 (sufficient only). Throws AssumptionViolated
/// when the nominal interconnection is not stable and ValidationError when Δ
/// is unstable or exceeds its declared bound.
[[nodiscard]] StabilityCertificate certify_guas(const GeneralizedPlant& gp,
                                                const UncertaintyRealization& delta,
                                                const HinfOptions& opt = {});

struct FamilyCertification {
  GeneralizedPlant gp;
  UncertaintyRealization delta;  // worst loop member, bound × inflation
  StabilityCertificate certificate;
};

/// Whole-family certificate: regimes with a nonzero gain form the
/// small-gain loop; the others are checked for open-loop stability.
[[nodiscard]] FamilyCertification certify_family(const StateSpaceModel& plant, const ModelFamily& family,
                                                 const FeedbackGains& gains, double inflation = 1.0,
                                                 const HinfOptions& opt = {});

/// Static rank-one Δ of norm `bound` aligned with the DC singular vectors
/// of the loop transfer; destabilizes the loop whenever bound·γ_DC > 1.
[[nodiscard]] UncertaintyRealization worst_case_delta(const GeneralizedPlant& gp, double bound);

// ============================================================================
// Empirical corroboration
// ============================================================================

struct Excitation {
  std::vector<double> amplitude;  // per input, uniform in [−a, a]
  double on_time = 200.0;         // s
  double dt = 1.0;                // s
  unsigned long long seed = 1;
  int windows = 8;
  int sample_every = 1;
};

struct EmpiricalBound {
  double tail_sup = 0.0;            // sup ‖z‖ after the input is removed
  bool decaying = true;             // window maxima non-increasing
  std::vector<double> window_max;
  bool diverged = false;
};

[[nodiscard]] EmpiricalBound empirical_ultimate_bound(const LtiSystem& closed_loop, const Excitation& exc,
                                                      double horizon);

/// Prefactored simulator shared by many seeds.
class ClosedLoopSimulator {
 public:
  ClosedLoopSimulator(const LtiSystem& sys, double dt);
  [[nodiscard]] EmpiricalBound run(const Excitation& exc, double horizon) const;

 private:
  LtiSystem sys_;
  double dt_;
  Eigen::SparseLU<SpMat> lu_;
  SpMat B_;
  Mat R_;  // ‖C x‖ = ‖R x‖
};

struct SeedSweep {
  int seeds = 0;
  int decaying = 0;
  std::vector<EmpiricalBound> runs;
};

/// Seeds first_seed .. first_seed + n − 1; OpenMP over seeds.
[[nodiscard]] SeedSweep empirical_sweep(const LtiSystem& closed_loop, Excitation exc, double horizon,
                                        int n, unsigned long long first_seed = 1);
[[nodiscard]] SeedSweep empirical_sweep_serial(const LtiSystem& closed_loop, Excitation exc,
                                               double horizon, int n, unsigned long long first_seed = 1);

}  // namespace rh
