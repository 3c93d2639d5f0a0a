#include "rh/hinf.hpp"

#include "rh/errors.hpp"
#include "rh/model_reduction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rh {

LtiSystem LtiSystem::from(const StateSpaceModel& m) {
  return {m.A, m.B_e, m.C, Mat::Zero(m.C.rows(), m.B_e.cols())};
}

LtiSystem LtiSystem::gain(const Mat& D) {
  return {Mat(0, 0), Mat(0, D.cols()), Mat(D.rows(), 0), D};
}

void LtiSystem::validate() const {
  const auto n = A.rows();
  if (A.cols() != n || B.rows() != n || C.cols() != n || D.rows() != C.rows() || D.cols() != B.cols())
    throw ValidationError("LTI system: inconsistent block dimensions");
}

CMat LtiSystem::response(std::complex<double> s) const {
  CMat G = D.cast<std::complex<double>>();
  const auto n = A.rows();
  if (n == 0) return G;
  CMat M = s * CMat::Identity(n, n) - A.cast<std::complex<double>>();
  G += C.cast<std::complex<double>>() * M.partialPivLu().solve(B.cast<std::complex<double>>());
  return G;
}

double peak_gain_at(const LtiSystem& sys, double omega) {
  return sigma_max(sys.response({0.0, omega}));
}

namespace {

HinfResult sweep(const LtiSystem& sys, const HinfOptions& opt, bool parallel) {
  sys.validate();
  HinfResult res;
  res.tol = opt.tol;
  const double dinf = sigma_max(sys.D);
  if (sys.A.rows() == 0) {
    res.gamma = dinf;
    res.grid_points = 0;
    return res;
  }
  const auto lam = eigenvalues(sys.A);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0, abscissa = -lo;
  for (const auto& l : lam) {
    abscissa = std::max(abscissa, l.real());
    const double m = std::abs(l);
    if (m > 0.0) {
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
  }
  if (!(abscissa < 0.0)) throw NumericalError("norm infinite (system not Hurwitz)");
  const double pad = std::pow(10.0, opt.decades_pad);
  double wlo = lo / pad, whi = hi * pad;
  const double min_decades = 8.0;
  const double span = std::log10(whi / wlo);
  if (span < min_decades) {
    const double c = 0.5 * (std::log10(whi) + std::log10(wlo));
    wlo = std::pow(10.0, c - min_decades / 2);
    whi = std::pow(10.0, c + min_decades / 2);
  }
  const int N = std::max(opt.grid_points, 2);
  std::vector<double> omega(N + 1), val(N + 1);
  omega[0] = 0.0;
  const double l0 = std::log(wlo), l1 = std::log(whi);
  for (int i = 0; i < N; ++i) omega[i + 1] = std::exp(l0 + (l1 - l0) * i / (N - 1));

  if (parallel) {
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i <= N; ++i) val[i] = peak_gain_at(sys, omega[i]);
  } else {
    for (int i = 0; i <= N; ++i) val[i] = peak_gain_at(sys, omega[i]);
  }

  int best = 0;
  for (int i = 1; i <= N; ++i)
    if (val[i] > val[best]) best = i;
  res.gamma = val[best];
  res.omega_peak = omega[best];
  res.omega_min = wlo;
  res.omega_max = whi;
  res.grid_points = N;

  // Golden-section refinement in log ω over the neighbouring grid cells.
  if (best >= 1) {
    double a = std::log(omega[std::max(best - 1, 1)]);
    double b = std::log(omega[std::min(best + 1, N)]);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    auto f = [&](double lw) { return peak_gain_at(sys, std::exp(lw)); };
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - g * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + g * (b - a);
        fd = f(d);
      }
    }
    const double fm = std::max(fc, fd);
    if (fm > res.gamma) {
      res.gamma = fm;
      res.omega_peak = std::exp(fc > fd ? c : d);
    }
  }
  if (dinf > res.gamma) {
    res.gamma = dinf;
    res.omega_peak = std::numeric_limits<double>::infinity();
  }
  return res;
}

}  // namespace

HinfResult hinf_norm(const LtiSystem& sys, const HinfOptions& opt) { return sweep(sys, opt, opt.parallel); }

HinfResult hinf_norm(const StateSpaceModel& sys, const HinfOptions& opt) {
  return hinf_norm(LtiSystem::from(sys), opt);
}

HinfResult hinf_norm_serial(const LtiSystem& sys, const HinfOptions& opt) { return sweep(sys, opt, false); }

}  // namespace rh
