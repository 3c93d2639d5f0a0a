#include "rh/stability_certifier.hpp"

#include "rh/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>

namespace rh {

// ============================================================================
// Generalized plant
// ============================================================================

void GeneralizedPlant::validate() const {
  const auto n = A.rows();
  auto need = [](bool ok, const char* block) {
    if (!ok) throw ValidationError(std::string("generalized plant: block ") + block + " has inconsistent dimensions");
  };
  need(A.cols() == n, "A");
  need(B_e.rows() == n, "B_e");
  need(B_f.rows() == n, "B_f");
  need(B_i.rows() == n, "B_i");
  need(C_y.cols() == n, "C_y");
  need(C_z.cols() == n, "C_z");
  need(D_ey.rows() == C_y.rows() && D_ey.cols() == B_e.cols(), "D_ey");
  need(D_fy.rows() == C_y.rows() && D_fy.cols() == B_f.cols(), "D_fy");
  need(D_iy.rows() == C_y.rows() && D_iy.cols() == B_i.cols(), "D_iy");
  need(D_fz.rows() == C_z.rows() && D_fz.cols() == B_f.cols(), "D_fz");
  need(D_iz.rows() == C_z.rows() && D_iz.cols() == B_i.cols(), "D_iz");
  need(n_plant + n_pred == n, "A (plant + predictor state split)");
  if (!A.allFinite()) throw ValidationError("generalized plant: A has non-finite entries");
}

UncertaintyRealization UncertaintyRealization::static_gain(const Mat& D, double bound) {
  return {Mat(0, 0), Mat(0, D.cols()), Mat(D.rows(), 0), D, bound};
}

GeneralizedPlant assemble_lft(const StateSpaceModel& plant, const ModelFamily& family,
                              const FeedbackGains& gains) {
  plant.validate();
  const auto& nom = family.nominal.ssm;
  const auto np = plant.order(), r = nom.order(), p = plant.outputs();
  if (nom.outputs() != p)
    throw ValidationError("assemble_lft: block C_n has " + std::to_string(nom.outputs()) +
                          " outputs, plant C has " + std::to_string(p));
  if (gains.S.cols() != p) throw ValidationError("assemble_lft: block S columns must match plant outputs");
  const auto m = gains.S.rows();
  auto it = gains.L.find(family.nominal.regime);
  if (it == gains.L.end()) throw ValidationError("assemble_lft: no gain for the nominal regime");
  const Mat& Ln = it->second;
  if (Ln.rows() != r || Ln.cols() != m) throw ValidationError("assemble_lft: block L_n has wrong dimensions");
  if (plant.B_e.cols() != nom.B_e.cols()) throw ValidationError("assemble_lft: block B_e input count differs");

  GeneralizedPlant g;
  g.n_plant = np;
  g.n_pred = r;
  const auto N = np + r;
  const Mat SCp = gains.S * plant.C;
  const Mat SCn = gains.S * nom.C;
  g.A = Mat::Zero(N, N);
  g.A.topLeftCorner(np, np) = plant.A;
  g.A.bottomLeftCorner(r, np) = Ln * SCp;
  g.A.bottomRightCorner(r, r) = nom.A - Ln * SCn;

  const auto ne = plant.B_e.cols();
  g.B_e.resize(N, ne);
  g.B_e << plant.B_e, nom.B_e;
  g.B_f = Mat::Zero(N, m);
  g.B_f.bottomRows(r) = Ln;
  g.B_i = Mat::Zero(N, r + p);
  g.B_i.bottomLeftCorner(r, r).setIdentity();

  const auto ny = r + m + ne;
  g.C_y = Mat::Zero(ny, N);
  g.C_y.block(0, np, r, r).setIdentity();
  g.C_y.block(r, 0, m, np) = SCp;
  g.D_ey = Mat::Zero(ny, ne);
  g.D_ey.bottomRows(ne).setIdentity();
  g.D_fy = Mat::Zero(ny, m);
  g.D_fy.block(r, 0, m, m).setIdentity();
  g.D_iy = Mat::Zero(ny, r + p);

  g.C_z.resize(p, N);
  g.C_z << plant.C, -nom.C;
  g.D_fz = Mat::Zero(p, m);
  g.D_iz = Mat::Zero(p, r + p);
  g.D_iz.rightCols(p) = -Mat::Identity(p, p);
  g.validate();
  return g;
}

Mat member_delta(const ModelFamily& family, const FeedbackGains& gains, int regime) {
  const auto& nom = family.nominal.ssm;
  const auto& mem = family.member(regime).ssm;
  const auto r = nom.order(), p = nom.outputs(), m = gains.S.rows(), ne = nom.B_e.cols();
  if (mem.order() != r) throw ValidationError("member_delta: member order differs from nominal");
  const Mat& Ln = gains.L.at(family.nominal.regime);
  auto it = gains.L.find(regime);
  if (it == gains.L.end()) throw ValidationError("member_delta: no gain for regime " + std::to_string(regime));
  const Mat& Li = it->second;

  const Mat H = nom.C.colPivHouseholderQr().solve(mem.C);
  Eigen::PartialPivLU<Mat> Hlu(H);
  if (!(Hlu.rcond() > 1e-12))
    throw ValidationError("member_delta: regime " + std::to_string(regime) +
                          " output basis does not map onto the nominal one");
  const Mat Hinv = Hlu.inverse();
  const Mat At = H * mem.A * Hinv;
  const Mat Lt = H * Li;
  const Mat Ct = mem.C * Hinv;
  const Mat Bt = H * mem.B_e;

  Mat D = Mat::Zero(r + p, r + m + ne);
  D.topLeftCorner(r, r) = (At - Lt * gains.S * Ct) - (nom.A - Ln * gains.S * nom.C);
  D.block(0, r, r, m) = Lt - Ln;
  D.block(0, r + m, r, ne) = Bt - nom.B_e;
  D.bottomLeftCorner(p, r) = Ct - nom.C;
  return D;
}

LtiSystem close_lft(const GeneralizedPlant& gp, const UncertaintyRealization& d) {
  gp.validate();
  const auto n = gp.A.rows(), nd = d.A.rows();
  const auto ni = gp.B_i.cols(), ny = gp.C_y.rows();
  if (d.D.rows() != ni || d.D.cols() != ny || d.B.cols() != ny || d.C.rows() != ni || d.B.rows() != nd ||
      d.C.cols() != nd)
    throw ValidationError("close_lft: Δ dimensions do not match the (u_i, y_i) channel");
  const auto ne = gp.B_e.cols(), nf = gp.B_f.cols();
  Mat Dw(ny, ne + nf);
  Dw << gp.D_ey, gp.D_fy;
  Mat Bw(n, ne + nf);
  Bw << gp.B_e, gp.B_f;

  const Mat Mfb = Mat::Identity(ni, ni) - d.D * gp.D_iy;
  Eigen::PartialPivLU<Mat> lu(Mfb);
  if (!(lu.rcond() > 1e-14)) throw NumericalError("close_lft: ill-posed interconnection (I − D_Δ D_iy singular)");
  const Mat Ux = lu.solve(d.D * gp.C_y);
  const Mat Ud = lu.solve(d.C);
  const Mat Uw = lu.solve(d.D * Dw);
  const Mat Yx = gp.C_y + gp.D_iy * Ux;
  const Mat Yd = gp.D_iy * Ud;
  const Mat Yw = Dw + gp.D_iy * Uw;

  LtiSystem s;
  s.A.resize(n + nd, n + nd);
  s.A << gp.A + gp.B_i * Ux, gp.B_i * Ud, d.B * Yx, d.A + d.B * Yd;
  s.B.resize(n + nd, ne + nf);
  s.B << Bw + gp.B_i * Uw, d.B * Yw;
  Mat Dz(gp.C_z.rows(), ne + nf);
  Dz << Mat::Zero(gp.C_z.rows(), ne), gp.D_fz;
  s.C.resize(gp.C_z.rows(), n + nd);
  s.C << gp.C_z + gp.D_iz * Ux, gp.D_iz * Ud;
  s.D = Dz + gp.D_iz * Uw;
  return s;
}

LoopChannels loop_channels(const GeneralizedPlant& gp) {
  const auto n = gp.A.rows();
  LoopChannels ch;
  std::vector<char> reach(n, 0);
  std::deque<int> q;
  for (int c = 0; c < gp.B_i.cols(); ++c) {
    const bool drives = gp.B_i.col(c).cwiseAbs().maxCoeff() > 0.0 ||
                        (gp.D_iy.rows() && gp.D_iy.col(c).cwiseAbs().maxCoeff() > 0.0);
    if (!drives) continue;
    ch.u_cols.push_back(c);
    for (Eigen::Index i = 0; i < n; ++i)
      if (gp.B_i(i, c) != 0.0 && !reach[i]) {
        reach[i] = 1;
        q.push_back(static_cast<int>(i));
      }
  }
  while (!q.empty()) {
    const int j = q.front();
    q.pop_front();
    for (Eigen::Index i = 0; i < n; ++i)
      if (gp.A(i, j) != 0.0 && !reach[i]) {
        reach[i] = 1;
        q.push_back(static_cast<int>(i));
      }
  }
  for (int r = 0; r < gp.C_y.rows(); ++r) {
    bool dep = false;
    for (Eigen::Index i = 0; i < n && !dep; ++i) dep = reach[i] && gp.C_y(r, i) != 0.0;
    for (int c : ch.u_cols) dep = dep || gp.D_iy(r, c) != 0.0;
    if (dep) ch.y_rows.push_back(r);
  }
  return ch;
}

LtiSystem loop_transfer(const GeneralizedPlant& gp) {
  const auto ch = loop_channels(gp);
  const auto n = gp.A.rows();
  std::vector<char> fwd(n, 0), bwd(n, 0);
  std::deque<int> q;
  for (int c : ch.u_cols)
    for (Eigen::Index i = 0; i < n; ++i)
      if (gp.B_i(i, c) != 0.0 && !fwd[i]) fwd[i] = 1, q.push_back(static_cast<int>(i));
  while (!q.empty()) {
    const int j = q.front();
    q.pop_front();
    for (Eigen::Index i = 0; i < n; ++i)
      if (gp.A(i, j) != 0.0 && !fwd[i]) fwd[i] = 1, q.push_back(static_cast<int>(i));
  }
  for (int r : ch.y_rows)
    for (Eigen::Index i = 0; i < n; ++i)
      if (gp.C_y(r, i) != 0.0 && !bwd[i]) bwd[i] = 1, q.push_back(static_cast<int>(i));
  while (!q.empty()) {
    const int i = q.front();
    q.pop_front();
    for (Eigen::Index j = 0; j < n; ++j)
      if (gp.A(i, j) != 0.0 && !bwd[j]) bwd[j] = 1, q.push_back(static_cast<int>(j));
  }
  std::vector<int> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (fwd[i] && bwd[i]) keep.push_back(static_cast<int>(i));
  const auto k = static_cast<Eigen::Index>(keep.size());
  const auto nu = static_cast<Eigen::Index>(ch.u_cols.size()), ny = static_cast<Eigen::Index>(ch.y_rows.size());
  LtiSystem s{Mat(k, k), Mat(k, nu), Mat(ny, k), Mat(ny, nu)};
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) s.A(a, b) = gp.A(keep[a], keep[b]);
    for (Eigen::Index c = 0; c < nu; ++c) s.B(a, c) = gp.B_i(keep[a], ch.u_cols[c]);
  }
  for (Eigen::Index r = 0; r < ny; ++r) {
    for (Eigen::Index a = 0; a < k; ++a) s.C(r, a) = gp.C_y(ch.y_rows[r], keep[a]);
    for (Eigen::Index c = 0; c < nu; ++c) s.D(r, c) = gp.D_iy(ch.y_rows[r], ch.u_cols[c]);
  }
  return s;
}

LtiSystem restrict_delta(const UncertaintyRealization& d, const LoopChannels& ch) {
  // Δ maps y_i → u_i: keep rows u_cols, columns y_rows.
  const auto nd = d.A.rows();
  const auto nu = static_cast<Eigen::Index>(ch.u_cols.size()), ny = static_cast<Eigen::Index>(ch.y_rows.size());
  LtiSystem s{d.A, Mat(nd, ny), Mat(nu, nd), Mat(nu, ny)};
  for (Eigen::Index c = 0; c < ny; ++c) s.B.col(c) = d.B.col(ch.y_rows[c]);
  for (Eigen::Index r = 0; r < nu; ++r) {
    s.C.row(r) = d.C.row(ch.u_cols[r]);
    for (Eigen::Index c = 0; c < ny; ++c) s.D(r, c) = d.D(ch.u_cols[r], ch.y_rows[c]);
  }
  return s;
}

// ============================================================================
// Certificate
// ============================================================================

nlohmann::json StabilityCertificate::to_json() const {
  nlohmann::json j;
  j["gamma"] = gamma;
  j["delta_bound"] = delta_bound;
  j["margin"] = margin;
  j["pass"] = pass;
  j["inflation"] = inflation;
  j["sufficient_only"] = true;
  j["grid"] = {{"points", grid.grid_points},
               {"omega_min", grid.omega_min},
               {"omega_max", grid.omega_max},
               {"tol", grid.tol}};
  if (std::isfinite(grid.omega_peak))
    j["grid"]["omega_peak"] = grid.omega_peak;
  else
    j["grid"]["omega_peak"] = nullptr;
  j["loop_regimes"] = loop_regimes;
  j["open_loop_regimes"] = open_loop_regimes;
  nlohmann::json md = nlohmann::json::object(), ol = nlohmann::json::object();
  for (const auto& [k, v] : member_delta) md[std::to_string(k)] = v;
  for (const auto& [k, v] : open_loop_abscissa) ol[std::to_string(k)] = v;
  j["member_delta"] = md;
  j["open_loop_abscissa"] = ol;
  return j;
}

StabilityCertificate StabilityCertificate::from_json(const nlohmann::json& j) {
  StabilityCertificate c;
  try {
    c.gamma = j.at("gamma").get<double>();
    c.delta_bound = j.at("delta_bound").get<double>();
    c.margin = j.at("margin").get<double>();
    c.pass = j.at("pass").get<bool>();
    c.inflation = j.value("inflation", 1.0);
    const auto& g = j.at("grid");
    c.grid.grid_points = g.at("points").get<int>();
    c.grid.omega_min = g.at("omega_min").get<double>();
    c.grid.omega_max = g.at("omega_max").get<double>();
    c.grid.tol = g.at("tol").get<double>();
    c.grid.omega_peak = g.at("omega_peak").is_null() ? std::numeric_limits<double>::infinity()
                                                     : g.at("omega_peak").get<double>();
    c.grid.gamma = c.gamma;
    c.loop_regimes = j.value("loop_regimes", std::vector<int>{});
    c.open_loop_regimes = j.value("open_loop_regimes", std::vector<int>{});
    const auto md = j.value("member_delta", nlohmann::json::object());
    for (const auto& [k, v] : md.items()) c.member_delta[std::stoi(k)] = v.get<double>();
    const auto ol = j.value("open_loop_abscissa", nlohmann::json::object());
    for (const auto& [k, v] : ol.items()) c.open_loop_abscissa[std::stoi(k)] = v.get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("certificate JSON: ") + e.what());
  }
  return c;
}

StabilityCertificate certify_guas(const GeneralizedPlant& gp, const UncertaintyRealization& delta,
                                  const HinfOptions& opt) {
  gp.validate();
  const double a = spectral_abscissa(gp.A);
  if (!(a < 0.0))
    throw AssumptionViolated("assumption violated: nominal interconnection not stable (abscissa " +
                             std::to_string(a) + ")");
  if (delta.A.rows() && !(spectral_abscissa(delta.A) < 0.0)) throw ValidationError("unstable delta");
  if (!(delta.delta_bound >= 0.0)) throw ValidationError("delta bound must be >= 0");

  const auto ch = loop_channels(gp);
  const double measured = hinf_norm(restrict_delta(delta, ch), opt).gamma;
  if (measured > delta.delta_bound + 1e-6 * std::max(1.0, delta.delta_bound))
    throw ValidationError("delta peak gain " + std::to_string(measured) + " exceeds declared bound " +
                          std::to_string(delta.delta_bound));

  StabilityCertificate c;
  c.grid = hinf_norm(loop_transfer(gp), opt);
  c.gamma = c.grid.gamma;
  c.delta_bound = delta.delta_bound;
  c.margin = 1.0 - c.gamma * c.delta_bound;
  c.pass = c.margin > 0.0;
  return c;
}

FamilyCertification certify_family(const StateSpaceModel& plant, const ModelFamily& family,
                                   const FeedbackGains& gains, double inflation, const HinfOptions& opt) {
  if (!(inflation > 0.0)) throw ValidationError("certify: inflation must be > 0");
  FamilyCertification out;
  out.gp = assemble_lft(plant, family, gains);
  const auto ch = loop_channels(out.gp);

  double worst = 0.0;
  Mat worst_D = Mat::Zero(out.gp.B_i.cols(), out.gp.C_y.rows());
  std::vector<int> loop, open;
  std::map<int, double> md, ol;
  for (const auto& [id, m] : family.members) {
    auto it = gains.L.find(id);
    if (it == gains.L.end()) throw ValidationError("certify: no gain for regime " + std::to_string(id));
    if (it->second.cwiseAbs().maxCoeff() == 0.0) {
      open.push_back(id);
      ol[id] = spectral_abscissa(m.ssm.A);
      continue;
    }
    loop.push_back(id);
    const Mat D = member_delta(family, gains, id);
    const double g = sigma_max(restrict_delta(UncertaintyRealization::static_gain(D, 0.0), ch).D);
    md[id] = g;
    if (g > worst) {
      worst = g;
      worst_D = D;
    }
  }
  out.delta = UncertaintyRealization::static_gain(worst_D, worst * inflation);
  out.certificate = certify_guas(out.gp, out.delta, opt);
  out.certificate.inflation = inflation;
  out.certificate.loop_regimes = loop;
  out.certificate.open_loop_regimes = open;
  out.certificate.member_delta = md;
  out.certificate.open_loop_abscissa = ol;
  for (const auto& [id, a] : ol)
    if (!(a < 0.0)) out.certificate.pass = false;
  return out;
}

UncertaintyRealization worst_case_delta(const GeneralizedPlant& gp, double bound) {
  const auto ch = loop_channels(gp);
  const LtiSystem T = loop_transfer(gp);
  const Mat T0 = T.response({0.0, 0.0}).real();
  Eigen::JacobiSVD<Mat> svd(T0, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // T0 = U Σ Vᵀ; Δ = bound·v₁u₁ᵀ makes T0·Δ have eigenvalue bound·σ₁.
  const Mat Dl = bound * svd.matrixV().col(0) * svd.matrixU().col(0).transpose();
  Mat D = Mat::Zero(gp.B_i.cols(), gp.C_y.rows());
  for (size_t r = 0; r < ch.u_cols.size(); ++r)
    for (size_t c = 0; c < ch.y_rows.size(); ++c) D(ch.u_cols[r], ch.y_rows[c]) = Dl(r, c);
  return UncertaintyRealization::static_gain(D, bound);
}

// ============================================================================
// Empirical corroboration
// ============================================================================

ClosedLoopSimulator::ClosedLoopSimulator(const LtiSystem& sys, double dt) : sys_(sys), dt_(dt) {
  sys.validate();
  if (!(dt > 0.0)) throw ValidationError("simulator: dt must be > 0");
  const auto n = sys.A.rows();
  SpMat M = to_sparse(Mat::Identity(n, n) - dt * sys.A);
  lu_.analyzePattern(M);
  lu_.factorize(M);
  if (lu_.info() != Eigen::Success) throw NumericalError("simulator: factorization failed");
  B_ = to_sparse(sys.B);
  if (sys.C.rows() > sys.C.cols()) {
    Eigen::HouseholderQR<Mat> qr(sys.C);
    R_ = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  } else {
    R_ = sys.C;
  }
}

EmpiricalBound ClosedLoopSimulator::run(const Excitation& exc, double horizon) const {
  const auto n = sys_.A.rows(), m = sys_.B.cols();
  EmpiricalBound out;
  std::mt19937_64 rng(exc.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Vec x = Vec::Zero(n), w(m);
  const int on_steps = static_cast<int>(std::llround(exc.on_time / dt_));
  const int total = static_cast<int>(std::llround(horizon / dt_));
  const int tail = std::max(total - on_steps, 0);
  const int windows = std::max(exc.windows, 1);
  const int every = std::max(exc.sample_every, 1);
  std::vector<double> samples;
  for (int k = 0; k < total; ++k) {
    Vec rhs = x;
    if (k < on_steps) {
      for (Eigen::Index i = 0; i < m; ++i) {
        const double a = i < static_cast<Eigen::Index>(exc.amplitude.size()) ? exc.amplitude[i] : 0.0;
        w(i) = a * uni(rng);
      }
      rhs += dt_ * (B_ * w);
    }
    x = lu_.solve(rhs);
    if (!x.allFinite() || x.norm() > 1e150) {
      out.diverged = true;
      out.decaying = false;
      out.tail_sup = std::numeric_limits<double>::infinity();
      return out;
    }
    if (k >= on_steps && (k - on_steps) % every == 0) samples.push_back((R_ * x).norm());
  }
  if (tail == 0 || samples.empty()) return out;
  const size_t per = std::max<size_t>(1, samples.size() / windows);
  for (size_t s = 0; s < samples.size(); s += per) {
    double mx = 0.0;
    for (size_t i = s; i < std::min(samples.size(), s + per); ++i) mx = std::max(mx, samples[i]);
    out.window_max.push_back(mx);
  }
  out.tail_sup = *std::max_element(samples.begin(), samples.end());
  for (size_t i = 1; i < out.window_max.size(); ++i)
    if (out.window_max[i] > out.window_max[i - 1] * (1.0 + 1e-9)) out.decaying = false;
  return out;
}

EmpiricalBound empirical_ultimate_bound(const LtiSystem& closed_loop, const Excitation& exc, double horizon) {
  ClosedLoopSimulator sim(closed_loop, exc.dt);
  return sim.run(exc, horizon);
}

SeedSweep empirical_sweep(const LtiSystem& closed_loop, Excitation exc, double horizon, int n,
                          unsigned long long first_seed) {
  ClosedLoopSimulator sim(closed_loop, exc.dt);
  SeedSweep s;
  s.seeds = n;
  s.runs.resize(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    Excitation e = exc;
    e.seed = first_seed + static_cast<unsigned long long>(i);
    s.runs[i] = sim.run(e, horizon);
  }
  for (const auto& r : s.runs) s.decaying += r.decaying ? 1 : 0;
  return s;
}

SeedSweep empirical_sweep_serial(const LtiSystem& closed_loop, Excitation exc, double horizon, int n,
                                 unsigned long long first_seed) {
  ClosedLoopSimulator sim(closed_loop, exc.dt);
  SeedSweep s;
  s.seeds = n;
  for (int i = 0; i < n; ++i) {
    Excitation e = exc;
    e.seed = first_seed + static_cast<unsigned long long>(i);
    s.runs.push_back(sim.run(e, horizon));
    s.decaying += s.runs.back().decaying ? 1 : 0;
  }
  return s;
}

}  // namespace rh
