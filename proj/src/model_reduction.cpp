#include "rh/model_reduction.hpp"

#include "rh/errors.hpp"
#include "rh/hinf.hpp"
#include "rh/matrix_io.hpp"
#include "rh/thermal_plant.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace rh {

void StateSpaceModel::validate() const {
  const auto r = A.rows();
  if (A.cols() != r) throw ValidationError("state-space model: A must be square");
  if (B_e.rows() != r) throw ValidationError("state-space model: B_e rows must match A");
  if (B_f.size() != 0 && B_f.rows() != r) throw ValidationError("state-space model: B_f rows must match A");
  if (C.cols() != r) throw ValidationError("state-space model: C cols must match A");
  if (!A.allFinite() || !B_e.allFinite() || !C.allFinite() || !B_f.allFinite())
    throw ValidationError("state-space model: non-finite entries");
}

CMat StateSpaceModel::response(std::complex<double> s) const {
  const auto r = A.rows();
  CMat M = s * CMat::Identity(r, r) - A.cast<std::complex<double>>();
  CMat X = M.partialPivLu().solve(B_e.cast<std::complex<double>>());
  return C.cast<std::complex<double>>() * X;
}

StateSpaceModel plant_model(const FullOrderPlant& plant, int regime) {
  StateSpaceModel m;
  m.A = plant.A_dense(regime);
  m.B_e = plant.B_e(regime);
  m.C = plant.C_z;
  return m;
}

namespace {

Eigen::PartialPivLU<Mat> shifted_lu(const Mat& A, double s0) {
  const auto n = A.rows();
  Mat M = s0 * Mat::Identity(n, n) - A;
  Eigen::PartialPivLU<Mat> lu(M);
  const double rc = n ? lu.rcond() : 1.0;
  const Vec piv = lu.matrixLU().diagonal().cwiseAbs();
  if (!(rc > 1e-14) || (n && !(piv.minCoeff() > 1e-14 * piv.maxCoeff()))) throw NumericalError("expansion point hits spectrum (s0 = " + format_double(s0) + ")");
  return lu;
}

}  // namespace

std::vector<Mat> compute_moments(const StateSpaceModel& model, double s0, int k) {
  model.validate();
  if (k < 1) throw ValidationError("compute_moments: k must be >= 1");
  auto lu = shifted_lu(model.A, s0);
  std::vector<Mat> out;
  Mat w = model.B_e;
  double sign = 1.0;
  for (int j = 0; j < k; ++j) {
    w = lu.solve(w);
    out.push_back(sign * (model.C * w));
    sign = -sign;
  }
  return out;
}

ReducedModel krylov_reduce(const StateSpaceModel& model, double s0, int k,
                           const std::optional<Mat>& start, int regime) {
  model.validate();
  if (k < 1) throw ValidationError("krylov_reduce: k must be >= 1");
  const auto n = model.order();
  const Mat& B0 = start ? *start : model.B_e;
  if (B0.rows() != n) throw ValidationError("krylov_reduce: start block rows must match A");
  auto lu = shifted_lu(model.A, s0);

  ReducedModel out;
  out.regime = regime;
  out.s0 = s0;
  out.k_moments = k;
  std::vector<Vec> basis;
  Mat W = lu.solve(B0);
  bool deficient = false;
  for (int j = 0; j < k && !deficient; ++j) {
    Mat next(n, 0);
    for (Eigen::Index c = 0; c < W.cols(); ++c) {
      Vec v = W.col(c);
      const double v0 = v.norm();
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& u : basis) v -= u.dot(v) * u;
      const double nv = v.norm();
      if (!(v0 > 0.0) || nv <= 1e-10 * v0) {
        deficient = true;
        continue;
      }
      v /= nv;
      basis.push_back(v);
      next.conservativeResize(n, next.cols() + 1);
      next.col(next.cols() - 1) = v;
    }
    if (next.cols() == 0) break;
    W = lu.solve(next);
  }
  if (basis.empty()) throw NumericalError("krylov_reduce: Krylov starting block is zero");
  if (deficient) {
    out.warnings.push_back("Krylov vectors rank deficient; reduced order " +
                           std::to_string(basis.size()));
  }
  out.V.resize(n, static_cast<Eigen::Index>(basis.size()));
  for (size_t c = 0; c < basis.size(); ++c) out.V.col(static_cast<Eigen::Index>(c)) = basis[c];

  out.ssm.A = out.V.transpose() * model.A * out.V;
  out.ssm.B_e = out.V.transpose() * model.B_e;
  out.ssm.C = model.C * out.V;
  out.ssm.input_label = model.input_label;
  out.ssm.output_label = model.output_label;

  if (spectral_abscissa(out.ssm.A) >= 0.0) {
    // Reflect unstable eigenvalues across the imaginary axis.
    Eigen::EigenSolver<Mat> es(out.ssm.A);
    CVec lam = es.eigenvalues();
    for (Eigen::Index i = 0; i < lam.size(); ++i)
      if (lam(i).real() >= 0.0) lam(i) = {-std::max(lam(i).real(), 1e-12), lam(i).imag()};
    const CMat X = es.eigenvectors();
    out.ssm.A = (X * lam.asDiagonal() * X.inverse()).real();
    out.stabilized = true;
    out.warnings.push_back("projection destabilized A_r; unstable eigenvalues reflected");
  }
  return out;
}

std::vector<double> moment_errors(const StateSpaceModel& full, const ReducedModel& reduced, double eps) {
  const auto mf = compute_moments(full, reduced.s0, reduced.k_moments);
  const auto mr = compute_moments(reduced.ssm, reduced.s0, reduced.k_moments);
  std::vector<double> err;
  for (size_t j = 0; j < mf.size(); ++j) {
    const double scale = std::max(mf[j].cwiseAbs().maxCoeff(), eps);
    err.push_back((mf[j] - mr[j]).cwiseAbs().maxCoeff() / scale);
  }
  return err;
}

// ============================================================================
// Centering
// ============================================================================

const ReducedModel& ModelFamily::member(int regime) const {
  auto it = members.find(regime);
  if (it == members.end()) throw ValidationError("regime " + std::to_string(regime) + " not in model family");
  return it->second;
}

CMat ModelFamily::reconstruct(int regime, std::complex<double> s) const {
  CMat H = nominal.ssm.response(s);
  if (regime == nominal.regime) return H;
  auto it = deltas.find(regime);
  if (it == deltas.end()) throw ValidationError("regime " + std::to_string(regime) + " not in model family");
  if (it->second.scaling == 0.0) return H;
  return H + it->second.scaling * it->second.delta.response(s);
}

StateSpaceModel parallel_difference(const StateSpaceModel& a, const StateSpaceModel& b) {
  if (a.outputs() != b.outputs() || a.B_e.cols() != b.B_e.cols())
    throw ValidationError("parallel difference: input/output dimensions differ");
  const auto ra = a.order(), rb = b.order();
  StateSpaceModel d;
  d.A = Mat::Zero(ra + rb, ra + rb);
  d.A.topLeftCorner(ra, ra) = a.A;
  d.A.bottomRightCorner(rb, rb) = b.A;
  d.B_e.resize(ra + rb, a.B_e.cols());
  d.B_e << a.B_e, b.B_e;
  d.C.resize(a.outputs(), ra + rb);
  d.C << a.C, -b.C;
  return d;
}

ModelFamily center_models(const std::map<int, ReducedModel>& members) {
  auto nom = members.find(0);
  if (nom == members.end()) throw ValidationError("center_models: regime 0 (nominal) missing");
  ModelFamily fam;
  fam.nominal = nom->second;
  fam.members = members;
  const double nominal_gain = hinf_norm(fam.nominal.ssm).gamma;
  for (const auto& [id, m] : members) {
    if (id == 0) continue;
    if (m.ssm.outputs() != fam.nominal.ssm.outputs())
      throw ValidationError("center_models: regime " + std::to_string(id) + " output dimension differs");
    StateSpaceModel diff = parallel_difference(m.ssm, fam.nominal.ssm);
    if (spectral_abscissa(diff.A) >= 0.0)
      throw NumericalError("center_models: difference realization for regime " + std::to_string(id) +
                           " is unstable");
    DeltaEntry e;
    const double g = hinf_norm(diff).gamma;
    if (g <= 1e-14 * std::max(nominal_gain, 1e-300)) {
      e.scaling = 0.0;
      e.delta.A = Mat(0, 0);
      e.delta.B_e = Mat(0, diff.B_e.cols());
      e.delta.C = Mat(diff.C.rows(), 0);
    } else {
      e.scaling = g;
      e.delta = diff;
      e.delta.C /= g;
    }
    fam.deltas.emplace(id, std::move(e));
  }
  return fam;
}

// ============================================================================
// Serialization
// ============================================================================

void save_reduced_model(const std::filesystem::path& path, const ReducedModel& m, double scaling) {
  nlohmann::json h;
  h["format"] = "rh.reduced_model";
  h["regime"] = m.regime;
  h["s0"] = m.s0;
  h["k"] = m.k_moments;
  h["scaling"] = scaling;
  h["stabilized"] = m.stabilized;
  h["blocks"] = {"A", "B_e", "B_f", "C", "V"};
  std::ostringstream os;
  os << h.dump() << '\n';
  write_matrix(os, m.ssm.A);
  write_matrix(os, m.ssm.B_e);
  write_matrix(os, m.ssm.B_f);
  write_matrix(os, m.ssm.C);
  write_matrix(os, m.V);
  write_file_atomic(path, os.str());
}

ReducedModel load_reduced_model(const std::filesystem::path& path, double* scaling) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open reduced model " + path.string());
  std::string header;
  std::getline(in, header);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": bad JSON header: " + e.what());
  }
  if (h.value("format", "") != "rh.reduced_model")
    throw ValidationError(path.string() + ": not a reduced-model file");
  ReducedModel m;
  m.regime = h.at("regime").get<int>();
  m.s0 = h.at("s0").get<double>();
  m.k_moments = h.at("k").get<int>();
  m.stabilized = h.value("stabilized", false);
  if (scaling) *scaling = h.at("scaling").get<double>();
  m.ssm.A = read_matrix(in);
  m.ssm.B_e = read_matrix(in);
  m.ssm.B_f = read_matrix(in);
  m.ssm.C = read_matrix(in);
  m.V = read_matrix(in);
  m.ssm.validate();
  return m;
}

}  // namespace rh
