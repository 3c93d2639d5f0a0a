#pragma once

#include "rh/layout.hpp"
#include "rh/linalg.hpp"
#include "rh/model_reduction.hpp"

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace rh {

// ============================================================================
// History and scheduler
// ============================================================================

enum class EventKind {
  exposure_on,
  exposure_off,
  clamp,
  unclamp,
  pellicle_on,
  pellicle_off,
  measurement,
  lot_start,
  lot_end
};

[[nodiscard]] std::string to_string(EventKind k);

struct Event {
  double t = 0.0;
  EventKind kind = EventKind::lot_start;
  int layout_id = -1;  // measurement events only
  Vec y;               // measurement payload
};

struct HistoryLog {
  std::vector<Event> events;

  /// Throws ValidationError on decreasing timestamps or a measurement
  /// without a layout id.
  void validate() const;
  void push(Event e);
};

/// Predicates over the clamp/pellicle state implied by a history.
enum class Predicate { always, unclamped, reclamped, pellicle, reclamped_pellicle };

[[nodiscard]] std::string to_string(Predicate p);
[[nodiscard]] Predicate predicate_from_string(const std::string& s);

struct SchedulerRule {
  Predicate when = Predicate::always;
  int regime = 0;
};

struct Scheduler {
  std::vector<SchedulerRule> rules;  // first match wins, otherwise regime 0
  double dwell_min = 1.0;            // s

  /// unclamped → 1, reclamped → 2; with pellicle rules for 3 and 4.
  [[nodiscard]] static Scheduler standard(bool with_pellicle = false);
  /// {0} ∪ rule regimes, sorted.
  [[nodiscard]] std::vector<int> regimes() const;
  void validate() const;
};

/// Regime implied by the history without dwell deferral.
[[nodiscard]] int target_regime(const Scheduler& s, const HistoryLog& h);

struct RegimeSwitch {
  double t = 0.0;
  int from = 0;
  int to = 0;
};

/// Switches executed up to t_now (default: last event time), honoring dwell_min
/// by deferring a switch until the dwell has elapsed.
[[nodiscard]] std::vector<RegimeSwitch> regime_switches(const Scheduler& s, const HistoryLog& h,
                                                        std::optional<double> t_now = std::nullopt);

[[nodiscard]] int classify_regime(const Scheduler& s, const HistoryLog& h,
                                  std::optional<double> t_now = std::nullopt);

// ============================================================================
// Partial state feedback
// ============================================================================

/// Active marks of a layout together with their sampling selector S.
struct MeasurementMap {
  MarkLayout layout;
  Mat S;  // 2m × p

  [[nodiscard]] Eigen::Index measurements() const { return S.rows(); }
};

/// x* = argmin ‖S·C·x − y‖² + λ‖x‖².
[[nodiscard]] Vec gamma_coefficients(const MeasurementMap& meas, const Vec& y,
                                     const ReducedModel& model, double lambda);

/// Dense innovation field C·x*.
[[nodiscard]] Vec gamma_map(const MeasurementMap& meas, const Vec& y, const ReducedModel& model,
                            double lambda);

/// Throws ValidationError listing the eigenvalues λ of A with Re λ ≥ floor
/// that are unobservable from G.
void check_detectability(const Mat& A, const Mat& G, double floor);

/// Observer gain with abscissa(A − L·S·C) ≤ rho·abscissa(A), from the
/// near-minimum-energy CARE of the shifted pair (A − rho·α·I, S·C).
[[nodiscard]] Mat design_feedback_gain(const ReducedModel& model, const MeasurementMap& meas,
                                       double rho, double q = 1e-9);

/// Stabilizing solution of Aᵀ X + X A − X B Bᵀ X + Q = 0 (matrix sign function).
[[nodiscard]] Mat solve_care(const Mat& A, const Mat& B, const Mat& Q);

struct PredictorModel {
  ReducedModel model;
  Mat L;  // r × 2m; zero columns disable correction

  [[nodiscard]] int regime() const { return model.regime; }
};

struct PredictorState {
  std::shared_ptr<const PredictorModel> model;
  Vec xhat;
  double t = 0.0;
  double last_switch_t = -std::numeric_limits<double>::infinity();
};

struct PredictorOutput {
  PredictorState state;
  Vec zhat;
};

/// Post-propagation correction with the innovation u_f = Γ(y − S·C·x̂):
/// x⁺ = x̂ + (I + dt·L·S·C)⁻¹·dt·L·S·u_f.
[[nodiscard]] PredictorState predictor_correct(const PredictorState& ps, const Vec& y,
                                               const MeasurementMap& meas, double dt, double lambda);

/// Implicit-Euler propagation, then the correction when y is present.
[[nodiscard]] PredictorOutput predictor_step(const PredictorState& ps, double u_e,
                                             const std::optional<Vec>& y, const MeasurementMap& meas,
                                             double dt, double lambda = 1e-6);

/// x̂⁺ = argmin ‖C_next·x − C·x̂‖² + λ‖x‖².
[[nodiscard]] PredictorState handoff(const PredictorState& ps,
                                     std::shared_ptr<const PredictorModel> next, double t,
                                     double lambda = 1e-12);

/// max-abs of the output jump after projection onto range(C_next).
[[nodiscard]] double handoff_jump(const PredictorState& before, const PredictorState& after);

}  // namespace rh
