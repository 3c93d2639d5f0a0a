#include "rh/switching_predictor.hpp"

#include "rh/errors.hpp"
#include "rh/matrix_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace rh {

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::exposure_on: return "exposure_on";
    case EventKind::exposure_off: return "exposure_off";
    case EventKind::clamp: return "clamp";
    case EventKind::unclamp: return "unclamp";
    case EventKind::pellicle_on: return "pellicle_on";
    case EventKind::pellicle_off: return "pellicle_off";
    case EventKind::measurement: return "measurement";
    case EventKind::lot_start: return "lot_start";
    case EventKind::lot_end: return "lot_end";
  }
  return "?";
}

std::string to_string(Predicate p) {
  switch (p) {
    case Predicate::always: return "always";
    case Predicate::unclamped: return "unclamped";
    case Predicate::reclamped: return "reclamped";
    case Predicate::pellicle: return "pellicle";
    case Predicate::reclamped_pellicle: return "reclamped_pellicle";
  }
  return "?";
}

Predicate predicate_from_string(const std::string& s) {
  for (auto p : {Predicate::always, Predicate::unclamped, Predicate::reclamped, Predicate::pellicle,
                 Predicate::reclamped_pellicle})
    if (to_string(p) == s) return p;
  throw ValidationError("unknown scheduler predicate '" + s + "'");
}

void HistoryLog::validate() const {
  for (size_t i = 0; i < events.size(); ++i) {
    if (!std::isfinite(events[i].t)) throw ValidationError("history: non-finite timestamp");
    if (i && events[i].t < events[i - 1].t) throw ValidationError("history: timestamps must be non-decreasing");
    if (events[i].kind == EventKind::measurement && events[i].layout_id < 0)
      throw ValidationError("history: measurement event without layout id");
  }
}

void HistoryLog::push(Event e) {
  if (!events.empty() && e.t < events.back().t)
    throw ValidationError("history: timestamps must be non-decreasing");
  if (e.kind == EventKind::measurement && e.layout_id < 0)
    throw ValidationError("history: measurement event without layout id");
  events.push_back(std::move(e));
}

// ============================================================================
// Scheduler
// ============================================================================

Scheduler Scheduler::standard(bool with_pellicle) {
  Scheduler s;
  s.rules.push_back({Predicate::unclamped, 1});
  if (with_pellicle) s.rules.push_back({Predicate::reclamped_pellicle, 4});
  s.rules.push_back({Predicate::reclamped, 2});
  if (with_pellicle) s.rules.push_back({Predicate::pellicle, 3});
  return s;
}

std::vector<int> Scheduler::regimes() const {
  std::set<int> ids{0};
  for (const auto& r : rules) ids.insert(r.regime);
  return {ids.begin(), ids.end()};
}

void Scheduler::validate() const {
  if (!(dwell_min >= 0.0) || !std::isfinite(dwell_min))
    throw ValidationError("scheduler: dwell_min must be a finite value >= 0");
  std::set<int> seen;
  for (const auto& r : rules) {
    if (r.regime < 0) throw ValidationError("scheduler: negative regime id");
    if (!seen.insert(r.regime).second)
      throw ValidationError("scheduler: duplicate regime id " + std::to_string(r.regime));
  }
}

namespace {

struct ClampState {
  bool clamped = true;
  bool reclamped = false;
  bool pellicle = false;
  bool seen_unclamp = false;

  void apply(EventKind k) {
    switch (k) {
      case EventKind::clamp:
        if (!clamped && seen_unclamp) reclamped = true;
        clamped = true;
        break;
      case EventKind::unclamp:
        clamped = false;
        seen_unclamp = true;
        break;
      case EventKind::pellicle_on: pellicle = true; break;
      case EventKind::pellicle_off: pellicle = false; break;
      default: break;
    }
  }

  [[nodiscard]] bool holds(Predicate p) const {
    switch (p) {
      case Predicate::always: return true;
      case Predicate::unclamped: return !clamped;
      case Predicate::reclamped: return clamped && reclamped;
      case Predicate::pellicle: return clamped && pellicle;
      case Predicate::reclamped_pellicle: return clamped && reclamped && pellicle;
    }
    return false;
  }
};

int evaluate(const Scheduler& s, const ClampState& st) {
  for (const auto& r : s.rules)
    if (st.holds(r.when)) return r.regime;
  return 0;
}

bool regime_event(EventKind k) {
  switch (k) {
    case EventKind::clamp:
    case EventKind::unclamp:
    case EventKind::pellicle_on:
    case EventKind::pellicle_off:
    case EventKind::lot_start:
    case EventKind::lot_end: return true;
    default: return false;
  }
}

}  // namespace

int target_regime(const Scheduler& s, const HistoryLog& h) {
  ClampState st;
  for (const auto& e : h.events) st.apply(e.kind);
  return evaluate(s, st);
}

std::vector<RegimeSwitch> regime_switches(const Scheduler& s, const HistoryLog& h,
                                          std::optional<double> t_now) {
  std::vector<RegimeSwitch> out;
  if (h.events.empty()) return out;
  const double t_end = t_now.value_or(h.events.back().t);
  ClampState st;
  int current = 0, target = 0;
  double last = -std::numeric_limits<double>::infinity();

  // Executes a pending switch whose dwell has elapsed by time t.
  auto flush = [&](double t) {
    if (target == current) return;
    const double when = last + s.dwell_min;
    if (when <= t) {
      out.push_back({when, current, target});
      current = target;
      last = when;
    }
  };

  for (const auto& e : h.events) {
    if (e.t > t_end) break;
    flush(e.t);
    st.apply(e.kind);
    if (!regime_event(e.kind)) continue;
    target = evaluate(s, st);
    if (target != current && e.t >= last + s.dwell_min) {
      out.push_back({e.t, current, target});
      current = target;
      last = e.t;
    }
  }
  flush(t_end);
  return out;
}

int classify_regime(const Scheduler& s, const HistoryLog& h, std::optional<double> t_now) {
  const auto sw = regime_switches(s, h, t_now);
  return sw.empty() ? 0 : sw.back().to;
}

// ============================================================================
// Γ map and gain design
// ============================================================================

Vec gamma_coefficients(const MeasurementMap& meas, const Vec& y, const ReducedModel& model, double lambda) {
  if (meas.measurements() == 0) throw ValidationError("feedback requested with empty layout");
  if (y.size() != meas.measurements())
    throw ValidationError("gamma_map: measurement length " + std::to_string(y.size()) + " != " +
                          std::to_string(meas.measurements()));
  const Mat G = meas.S * model.ssm.C;
  return ridge_solve(G, y, lambda);
}

Vec gamma_map(const MeasurementMap& meas, const Vec& y, const ReducedModel& model, double lambda) {
  return model.ssm.C * gamma_coefficients(meas, y, model, lambda);
}

void check_detectability(const Mat& A, const Mat& G, double floor) {
  const auto r = A.rows();
  const double scale = std::max({A.norm(), G.norm(), 1e-300});
  std::vector<std::complex<double>> bad;
  for (const auto& lam : eigenvalues(A)) {
    if (lam.real() < floor) continue;
    CMat P(r + G.rows(), r);
    P << lam * CMat::Identity(r, r) - A.cast<std::complex<double>>(), G.cast<std::complex<double>>();
    Eigen::BDCSVD<CMat> svd(P);
    const double smin = svd.singularValues()(r - 1);
    if (smin <= 1e-9 * scale) bad.push_back(lam);
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "undetectable configuration; unobservable modes:";
    for (const auto& l : bad) os << " (" << format_double(l.real()) << ", " << format_double(l.imag()) << "j)";
    throw ValidationError(os.str());
  }
}

Mat solve_care(const Mat& A, const Mat& B, const Mat& Q) {
  const auto n = A.rows();
  Mat H(2 * n, 2 * n);
  H << A, -B * B.transpose(), -Q, -A.transpose();
  Mat Z = H;
  for (int it = 0; it < 200; ++it) {
    Eigen::PartialPivLU<Mat> lu(Z);
    const double det = std::abs(lu.determinant());
    const double c = (det > 0.0 && std::isfinite(det)) ? std::pow(det, -1.0 / (2.0 * n)) : 1.0;
    Mat Zn = 0.5 * (c * Z + lu.inverse() / c);
    const double change = (Zn - Z).norm();
    Z = std::move(Zn);
    if (change <= 1e-13 * Z.norm()) break;
  }
  Mat lhs(2 * n, n), rhs(2 * n, n);
  lhs << Z.topRightCorner(n, n), Z.bottomRightCorner(n, n) + Mat::Identity(n, n);
  rhs << Z.topLeftCorner(n, n) + Mat::Identity(n, n), Z.bottomLeftCorner(n, n);
  Mat X = lhs.colPivHouseholderQr().solve(-rhs);
  X = 0.5 * (X + X.transpose()).eval();
  if (!X.allFinite()) throw NumericalError("CARE: sign iteration failed");
  return X;
}

Mat design_feedback_gain(const ReducedModel& model, const MeasurementMap& meas, double rho, double q) {
  if (meas.measurements() == 0) throw ValidationError("feedback gain requested for a layout with zero marks");
  if (!(rho > 1.0)) throw ValidationError("feedback: rho must be > 1");
  if (!(q > 0.0)) throw ValidationError("feedback: q must be > 0");
  const Mat& A = model.ssm.A;
  const auto r = A.rows();
  const Mat G = meas.S * model.ssm.C;
  const double alpha = spectral_abscissa(A);
  if (!(alpha < 0.0)) throw ValidationError("feedback: model is not stable");
  const double target = rho * alpha;
  check_detectability(A, G, target);

  const Mat As = A - target * Mat::Identity(r, r);
  const Mat X = solve_care(As.transpose(), G.transpose(), q * Mat::Identity(r, r));
  Mat L = X * G.transpose();
  const double achieved = spectral_abscissa(A - L * G);
  if (!(achieved <= target * (1.0 - 1e-10)))
    throw NumericalError("feedback: designed gain reaches abscissa " + format_double(achieved) +
                         ", target " + format_double(target));
  return L;
}

// ============================================================================
// Predictor
// ============================================================================

PredictorState predictor_correct(const PredictorState& ps, const Vec& y, const MeasurementMap& meas,
                                 double dt, double lambda) {
  const auto& m = ps.model->model;
  const Mat& L = ps.model->L;
  if (L.cols() != meas.measurements())
    throw ValidationError("predictor: gain columns do not match the measurement layout");
  if (!y.allFinite()) throw ValidationError("predictor: non-finite measurement");
  const Mat G = meas.S * m.ssm.C;
  const Vec nu = y - G * ps.xhat;
  const Vec uf = m.ssm.C * ridge_solve(G, nu, lambda);
  const auto r = m.ssm.order();
  const Mat K = Mat::Identity(r, r) + dt * L * G;
  PredictorState out = ps;
  out.xhat = ps.xhat + K.partialPivLu().solve(dt * (L * (meas.S * uf)));
  return out;
}

PredictorOutput predictor_step(const PredictorState& ps, double u_e, const std::optional<Vec>& y,
                               const MeasurementMap& meas, double dt, double lambda) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("predictor: dt must be > 0");
  if (!std::isfinite(u_e) || !ps.xhat.allFinite()) throw ValidationError("predictor: non-finite input");
  const auto& s = ps.model->model.ssm;
  const auto r = s.order();
  PredictorOutput out{ps, {}};
  Vec rhs = ps.xhat;
  if (u_e != 0.0) rhs += dt * u_e * s.B_e.col(0);
  out.state.xhat = (Mat::Identity(r, r) - dt * s.A).partialPivLu().solve(rhs);
  out.state.t = ps.t + dt;
  if (y) out.state = predictor_correct(out.state, *y, meas, dt, lambda);
  out.zhat = s.C * out.state.xhat;
  return out;
}

PredictorState handoff(const PredictorState& ps, std::shared_ptr<const PredictorModel> next, double t,
                       double lambda) {
  PredictorState out;
  const Mat& Cn = next->model.ssm.C;
  const Mat& Ck = ps.model->model.ssm.C;
  if (Cn.rows() != Ck.rows()) throw ValidationError("handoff: output dimensions differ");
  out.xhat = ridge_solve(Cn, Ck * ps.xhat, lambda);
  out.model = std::move(next);
  out.t = t;
  out.last_switch_t = t;
  return out;
}

double handoff_jump(const PredictorState& before, const PredictorState& after) {
  const Mat& Cn = after.model->model.ssm.C;
  const Vec d = Cn * after.xhat - before.model->model.ssm.C * before.xhat;
  const Mat Q = range_basis(Cn);
  return (Q * (Q.transpose() * d)).cwiseAbs().maxCoeff();
}

}  // namespace rh
