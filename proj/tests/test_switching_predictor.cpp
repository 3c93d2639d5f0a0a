#include "rh/errors.hpp"
#include "rh/pipeline.hpp"
#include "rh/switching_predictor.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace rh {
namespace {

HistoryLog log_of(std::initializer_list<std::pair<double, EventKind>> ev) {
  HistoryLog h;
  for (const auto& [t, k] : ev) h.push({t, k, -1, {}});
  return h;
}

struct Fixture {
  Pipeline p = build_pipeline(test::small_grid_config());
  ModelFamily fam = center_models(reduce_regimes(p));
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

// ----------------------------------------------------------------------------
// Scheduler

TEST(Scheduler, StandardLotCycle) {
  const auto s = Scheduler::standard();
  auto h = log_of({{0.0, EventKind::clamp}, {0.0, EventKind::lot_start}});
  EXPECT_EQ(classify_regime(s, h), 0);
  h.push({100.0, EventKind::lot_end, -1, {}});
  h.push({100.0, EventKind::unclamp, -1, {}});
  EXPECT_EQ(classify_regime(s, h), 1);
  h.push({160.0, EventKind::clamp, -1, {}});
  EXPECT_EQ(classify_regime(s, h), 2);
  const auto sw = regime_switches(s, h);
  ASSERT_EQ(sw.size(), 2u);
  EXPECT_EQ(sw[0].t, 100.0);
  EXPECT_EQ(sw[1].t, 160.0);
}

TEST(Scheduler, PelliclePrecedence) {
  const auto s = Scheduler::standard(true);
  auto h = log_of({{0.0, EventKind::clamp}, {0.0, EventKind::pellicle_on}});
  EXPECT_EQ(classify_regime(s, h), 3);
  h.push({10.0, EventKind::unclamp, -1, {}});
  EXPECT_EQ(classify_regime(s, h), 1);
  h.push({20.0, EventKind::clamp, -1, {}});
  EXPECT_EQ(classify_regime(s, h), 4);
}

TEST(Scheduler, DwellDefersAndPendingSwitchFlushes) {
  auto s = Scheduler::standard();
  s.dwell_min = 5.0;
  const auto h = log_of({{0.0, EventKind::clamp}, {10.0, EventKind::unclamp}, {12.0, EventKind::clamp}});
  EXPECT_EQ(classify_regime(s, h, 12.0), 1);
  EXPECT_EQ(classify_regime(s, h, 14.9), 1);
  EXPECT_EQ(classify_regime(s, h, 15.0), 2);
}

TEST(Scheduler, ValidationErrors) {
  Scheduler s;
  s.rules = {{Predicate::unclamped, 1}, {Predicate::reclamped, 1}};
  EXPECT_THROW(s.validate(), ValidationError);
  s.rules = {{Predicate::unclamped, 1}};
  s.dwell_min = -1.0;
  EXPECT_THROW(s.validate(), ValidationError);
  HistoryLog h;
  h.push({1.0, EventKind::clamp, -1, {}});
  EXPECT_THROW(h.push({0.5, EventKind::unclamp, -1, {}}), ValidationError);
  EXPECT_THROW(h.push({2.0, EventKind::measurement, -1, {}}), ValidationError);
  EXPECT_THROW((void)predicate_from_string("sometimes"), ValidationError);
}

TEST(Scheduler, FuzzedHistoriesRespectDwellAndIgnoreMeasurements) {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<int> kind(0, 8);
  std::exponential_distribution<double> gap(1.0);
  std::normal_distribution<double> N(0.0, 1.0);
  const auto s = [] {
    auto s = Scheduler::standard(true);
    s.dwell_min = 1.5;
    return s;
  }();
  const auto ids = s.regimes();
  for (int trial = 0; trial < 10000; ++trial) {
    HistoryLog h, noisy;
    double t = 0.0;
    const int n = 1 + static_cast<int>(rng() % 25);
    for (int i = 0; i < n; ++i) {
      t += gap(rng) * (rng() % 4 == 0 ? 0.0 : 1.0);
      auto k = static_cast<EventKind>(kind(rng));
      if (k == EventKind::measurement) {
        Vec y(2);
        y << N(rng), N(rng);
        noisy.push({t, k, 0, y});
        continue;
      }
      h.push({t, k, -1, {}});
      noisy.push({t, k, -1, {}});
    }
    const auto sw = regime_switches(s, h, t + 10.0);
    const auto swn = regime_switches(s, noisy, t + 10.0);
    ASSERT_EQ(sw.size(), swn.size());
    for (size_t i = 0; i < sw.size(); ++i) {
      ASSERT_EQ(sw[i].t, swn[i].t);
      ASSERT_EQ(sw[i].to, swn[i].to);
      ASSERT_TRUE(std::count(ids.begin(), ids.end(), sw[i].to));
      ASSERT_NE(sw[i].from, sw[i].to);
      if (i > 0) ASSERT_GE(sw[i].t - sw[i - 1].t, s.dwell_min - 1e-12);
    }
    // once the dwell has elapsed the executed regime equals the rule target
    ASSERT_EQ(classify_regime(s, h, t + 10.0), h.events.empty() ? 0 : target_regime(s, h));
  }
}

// ----------------------------------------------------------------------------
// Γ map

TEST(Gamma, RidgeMatchesNormalEquationsAndPseudoInverse) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat G = test::random_matrix(12, 3, rng);
    const Vec y = test::random_matrix(12, 1, rng);
    const double lam = 1e-6;
    const Vec ref = (G.transpose() * G + lam * Mat::Identity(3, 3)).ldlt().solve(G.transpose() * y);
    EXPECT_LT((ridge_solve(G, y, lam) - ref).norm(), 1e-10 * ref.norm());
    const Vec pinv = G.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y);
    EXPECT_LT((ridge_solve(G, y, 0.0) - pinv).norm(), 1e-10 * pinv.norm());
  }
}

TEST(Gamma, RecoversRepresentableFieldsFromMarks) {
  const auto& f = fx();
  std::mt19937_64 rng(6);
  for (const auto& [id, m] : f.fam.members) {
    ASSERT_GE(f.p.meas_fb.measurements(), m.ssm.order());
    for (int trial = 0; trial < 5; ++trial) {
      const Vec x = test::random_matrix(m.ssm.order(), 1, rng);
      const Vec z = m.ssm.C * x;
      const Vec y = f.p.meas_fb.S * z;
      const Vec zr = gamma_map(f.p.meas_fb, y, m, 1e-9);
      EXPECT_LT((zr - z).norm() / z.norm(), 1e-6) << "regime " << id;
    }
  }
}

TEST(Gamma, ZeroDataGivesZeroField) {
  const auto& f = fx();
  const Vec zr = gamma_map(f.p.meas_fb, Vec::Zero(f.p.meas_fb.measurements()), f.fam.nominal, 1e-6);
  EXPECT_EQ(zr.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gamma, SingleMarkGivesTheMinimumNormFit) {
  const auto& f = fx();
  MeasurementMap one;
  one.layout.marks = {f.p.meas_fb.layout.active().front()};
  one.S = f.p.plant.sampling(one.layout);
  const Vec y = (Vec(2) << 0.3, -0.2).finished();
  const Mat G = one.S * f.fam.nominal.ssm.C;
  const Vec pinv = G.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(y);
  const Vec x = gamma_coefficients(one, y, f.fam.nominal, 0.0);
  EXPECT_LT((G * x - y).norm(), 1e-10);
  EXPECT_LT((x - pinv).norm(), 1e-9 * pinv.norm());
  // the λ → 0 limit of the ridge solution is the same point
  EXPECT_LT((gamma_coefficients(one, y, f.fam.nominal, 1e-14) - pinv).norm(), 1e-6 * pinv.norm());
}

TEST(Gamma, EmptyLayoutRejected) {
  const auto& f = fx();
  MeasurementMap empty;
  empty.S = Mat::Zero(0, f.p.plant.C_z.rows());
  EXPECT_THROW((void)gamma_map(empty, Vec(0), f.fam.nominal, 1e-6), ValidationError);
}

// ----------------------------------------------------------------------------
// Gain design

TEST(Gain, CareSolutionSatisfiesRiccati) {
  std::mt19937_64 rng(12);
  const Mat A = test::random_stable(5, rng) + 0.8 * Mat::Identity(5, 5);
  const Mat B = test::random_matrix(5, 2, rng);
  const Mat Q = Mat::Identity(5, 5);
  const Mat X = solve_care(A, B, Q);
  const Mat res = A.transpose() * X + X * A - X * B * B.transpose() * X + Q;
  EXPECT_LT(res.norm(), 1e-8 * X.norm());
  EXPECT_LT(spectral_abscissa(A - B * B.transpose() * X), 0.0);
}

TEST(Gain, ShiftedDesignMeetsTheDecayTarget) {
  const auto& f = fx();
  for (int id : {0, 2}) {
    const auto& m = f.fam.member(id);
    const double a = spectral_abscissa(m.ssm.A);
    for (double rho : {1.5, 3.0}) {
      const Mat L = design_feedback_gain(m, f.p.meas_fb, rho);
      const Mat G = f.p.meas_fb.S * m.ssm.C;
      EXPECT_LE(spectral_abscissa(m.ssm.A - L * G), rho * a) << "regime " << id << " rho " << rho;
    }
  }
}

TEST(Gain, UndetectablePairRejected) {
  const Mat A = Vec::LinSpaced(3, -3.0, -1.0).asDiagonal();
  Mat G = Mat::Zero(2, 3);
  G(0, 0) = 1.0;  // only the fastest mode is seen
  EXPECT_THROW(check_detectability(A, G, -2.0), ValidationError);
  G(1, 2) = 1.0;
  G(0, 1) = 1.0;
  EXPECT_NO_THROW(check_detectability(A, G, -2.0));
}

// ----------------------------------------------------------------------------
// Predictor

std::shared_ptr<const PredictorModel> predictor_model(const ReducedModel& m, const Mat& L) {
  auto pm = std::make_shared<PredictorModel>();
  pm->model = m;
  pm->L = L;
  return pm;
}

TEST(Predictor, WithheldMeasurementsReproduceOpenLoopBitwise) {
  const auto& f = fx();
  const auto& m = f.fam.nominal;
  auto zero = predictor_model(m, Mat::Zero(m.ssm.order(), f.p.meas_fb.measurements()));
  auto gain = predictor_model(m, design_feedback_gain(m, f.p.meas_fb, 1.5));
  PredictorState a{zero, Vec::Zero(m.ssm.order())}, b{gain, Vec::Zero(m.ssm.order())};
  std::mt19937_64 rng(1);
  for (int k = 0; k < 200; ++k) {
    const double u = k % 25 < 20 ? 1.0 : 0.0;
    const Vec y = test::random_matrix(f.p.meas_fb.measurements(), 1, rng);
    a = predictor_step(a, u, y, f.p.meas_fb, 0.5).state;  // zero gain: correction inactive
    b = predictor_step(b, u, std::nullopt, f.p.meas_fb, 0.5).state;
    ASSERT_EQ(a.xhat, b.xhat) << "step " << k;
  }
}

TEST(Predictor, ConvergesOnItsOwnModel) {
  const auto& f = fx();
  const auto& m = f.fam.nominal;
  const double a = spectral_abscissa(m.ssm.A);
  const double rho = -20.0 / a;  // target decay rate 20 1/s
  auto pm = predictor_model(m, design_feedback_gain(m, f.p.meas_fb, rho));
  auto open = predictor_model(m, Mat::Zero(m.ssm.order(), f.p.meas_fb.measurements()));
  std::mt19937_64 rng(2);
  PredictorState truth{open, test::random_matrix(m.ssm.order(), 1, rng)};
  PredictorState est{pm, Vec::Zero(m.ssm.order())};
  const Mat G = f.p.meas_fb.S * m.ssm.C;
  double resid = 0.0;
  for (int k = 0; k < 50; ++k) {
    truth = predictor_step(truth, 1.0, std::nullopt, f.p.meas_fb, 0.5).state;
    const Vec y = G * truth.xhat;
    est = predictor_step(est, 1.0, y, f.p.meas_fb, 0.5, 1e-12).state;
    resid = (G * est.xhat - y).norm();
  }
  EXPECT_LT(resid, 1e-6);
}

TEST(Predictor, HandoffIsContinuousAndIdempotent) {
  const auto& f = fx();
  std::mt19937_64 rng(5);
  const MeasurementMap& meas = f.p.meas_fb;
  std::map<int, std::shared_ptr<const PredictorModel>> bank;
  for (const auto& [id, m] : f.fam.members) bank[id] = predictor_model(m, Mat::Zero(m.ssm.order(), meas.measurements()));
  for (int trial = 0; trial < 20; ++trial) {
    PredictorState ps{bank.at(0), test::random_matrix(3, 1, rng)};
    for (int next : {2, 1, 0}) {
      const auto after = handoff(ps, bank.at(next), 1.0);
      EXPECT_LE(handoff_jump(ps, after), 1e-9);
      ps = after;
    }
    const auto same = handoff(ps, ps.model, 2.0);
    EXPECT_LT((same.xhat - ps.xhat).norm(), 1e-9 * std::max(1.0, ps.xhat.norm()));
  }
}

TEST(Predictor, GainLayoutMismatchRejected) {
  const auto& f = fx();
  const auto& m = f.fam.nominal;
  auto pm = predictor_model(m, Mat::Zero(m.ssm.order(), 4));
  PredictorState ps{pm, Vec::Zero(3)};
  EXPECT_THROW((void)predictor_correct(ps, Vec::Zero(f.p.meas_fb.measurements()), f.p.meas_fb, 0.5, 1e-6),
               ValidationError);
}

}  // namespace
}  // namespace rh
