#include "rh/errors.hpp"
#include "rh/pipeline.hpp"
#include "rh/stability_certifier.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace rh {
namespace {

using cd = std::complex<double>;

// Random 3-state plant with 4 outputs, 2 measurements, and a two-member
// family of 2-state predictors whose outputs share one range.
struct Toy {
  StateSpaceModel plant;
  ModelFamily family;
  FeedbackGains gains;
};

Toy make_toy(std::mt19937_64& rng, double spread) {
  Toy t;
  t.plant.A = test::random_stable(3, rng);
  t.plant.B_e = test::random_matrix(3, 1, rng);
  t.plant.C = test::random_matrix(4, 3, rng);
  ReducedModel n, m;
  n.regime = 0;
  n.ssm.A = test::random_stable(2, rng, 1.0);
  n.ssm.B_e = test::random_matrix(2, 1, rng);
  n.ssm.C = test::random_matrix(4, 2, rng);
  m.regime = 2;
  const Mat T = Mat::Identity(2, 2) + spread * test::random_matrix(2, 2, rng);  // member coordinates
  m.ssm.A = T.inverse() * (n.ssm.A + spread * test::random_matrix(2, 2, rng)) * T;
  m.ssm.B_e = T.inverse() * (n.ssm.B_e + spread * test::random_matrix(2, 1, rng));
  m.ssm.C = n.ssm.C * T;
  t.family.nominal = n;
  t.family.members = {{0, n}, {2, m}};
  t.gains.S = test::random_matrix(2, 4, rng);
  t.gains.L[0] = 0.1 * test::random_matrix(2, 2, rng);
  t.gains.L[2] = t.gains.L[0] + spread * 0.1 * test::random_matrix(2, 2, rng);
  return t;
}

LtiSystem monolithic(const Toy& t, int regime) {
  const auto& p = t.plant;
  const auto& m = t.family.member(regime).ssm;
  const Mat& L = t.gains.L.at(regime);
  const Mat& S = t.gains.S;
  LtiSystem s;
  s.A = Mat::Zero(5, 5);
  s.A.topLeftCorner(3, 3) = p.A;
  s.A.bottomLeftCorner(2, 3) = L * S * p.C;
  s.A.bottomRightCorner(2, 2) = m.A - L * S * m.C;
  s.B = Mat::Zero(5, 3);
  s.B.block(0, 0, 3, 1) = p.B_e;
  s.B.block(3, 0, 2, 1) = m.B_e;
  s.B.block(3, 1, 2, 2) = L;
  s.C.resize(4, 5);
  s.C << p.C, -m.C;
  s.D = Mat::Zero(4, 3);
  return s;
}

CMat resolvent_term(const Mat& A, const Mat& B, const Mat& C, cd s) {
  const auto n = A.rows();
  const CMat M = s * CMat::Identity(n, n) - A.cast<cd>();
  return C.cast<cd>() * M.partialPivLu().solve(B.cast<cd>());
}

TEST(Lft, MemberDeltaClosesToTheMonolithicLoop) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Toy t = make_toy(rng, 0.2);
    const auto gp = assemble_lft(t.plant, t.family, t.gains);
    for (int id : {0, 2}) {
      const auto closed = close_lft(gp, UncertaintyRealization::static_gain(member_delta(t.family, t.gains, id), 1.0));
      const auto ref = monolithic(t, id);
      for (double w : {0.0, 0.1, 1.0, 7.0}) {
        const CMat a = closed.response({0.0, w}), b = ref.response({0.0, w});
        EXPECT_LT((a - b).norm(), 1e-9 * std::max(1.0, b.norm())) << "regime " << id << " w " << w;
      }
    }
  }
}

TEST(Lft, DynamicDeltaClosureMatchesFrequencyDomainFormula) {
  std::mt19937_64 rng(32);
  const Toy t = make_toy(rng, 0.2);
  const auto gp = assemble_lft(t.plant, t.family, t.gains);
  const auto ni = gp.B_i.cols(), ny = gp.C_y.rows();
  UncertaintyRealization d;
  d.A = test::random_stable(2, rng, 1.0);
  d.B = 0.1 * test::random_matrix(2, ny, rng);
  d.C = 0.1 * test::random_matrix(ni, 2, rng);
  d.D = 0.05 * test::random_matrix(ni, ny, rng);
  const auto closed = close_lft(gp, d);
  Mat Bw(gp.A.rows(), gp.B_e.cols() + gp.B_f.cols());
  Bw << gp.B_e, gp.B_f;
  Mat Dyw(ny, Bw.cols()), Dzw(gp.C_z.rows(), Bw.cols());
  Dyw << gp.D_ey, gp.D_fy;
  Dzw << Mat::Zero(gp.C_z.rows(), gp.B_e.cols()), gp.D_fz;
  for (double w : {0.0, 0.3, 2.0}) {
    const cd s(0.0, w);
    const CMat Tzw = resolvent_term(gp.A, Bw, gp.C_z, s) + Dzw.cast<cd>();
    const CMat Tzi = resolvent_term(gp.A, gp.B_i, gp.C_z, s) + gp.D_iz.cast<cd>();
    const CMat Tyw = resolvent_term(gp.A, Bw, gp.C_y, s) + Dyw.cast<cd>();
    const CMat Tyi = resolvent_term(gp.A, gp.B_i, gp.C_y, s) + gp.D_iy.cast<cd>();
    const CMat Ds = resolvent_term(d.A, d.B, d.C, s) + d.D.cast<cd>();
    const CMat I = CMat::Identity(ni, ni);
    const CMat ref = Tzw + Tzi * (I - Ds * Tyi).partialPivLu().solve(Ds * Tyw);
    EXPECT_LT((closed.response(s) - ref).norm(), 1e-9 * ref.norm());
  }
}

TEST(Lft, BlockDimensionErrorsNameTheBlock) {
  std::mt19937_64 rng(33);
  Toy t = make_toy(rng, 0.1);
  t.gains.L[0] = Mat::Zero(2, 3);
  try {
    (void)assemble_lft(t.plant, t.family, t.gains);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("L_n"), std::string::npos);
  }
}

TEST(Certificate, SmallGainArithmetic) {
  std::mt19937_64 rng(34);
  const Toy t = make_toy(rng, 0.05);
  const auto fc = certify_family(t.plant, t.family, t.gains);
  const auto& c = fc.certificate;
  EXPECT_NEAR(c.gamma, hinf_norm(loop_transfer(fc.gp)).gamma, 1e-12);
  EXPECT_NEAR(c.margin, 1.0 - c.gamma * c.delta_bound, 1e-15);
  EXPECT_EQ(c.pass, c.margin > 0.0);
  EXPECT_EQ(c.loop_regimes, (std::vector<int>{0, 2}));
  EXPECT_LT(c.member_delta.at(0), 1e-12);
  const auto inflated = certify_family(t.plant, t.family, t.gains, 10.0);
  EXPECT_NEAR(inflated.certificate.delta_bound, 10.0 * c.delta_bound, 1e-12 * c.delta_bound);
}

TEST(Certificate, PassingLoopIsStableForEveryMember) {
  std::mt19937_64 rng(35);
  int passed = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Toy t = make_toy(rng, 0.05);
    const auto fc = certify_family(t.plant, t.family, t.gains);
    if (!fc.certificate.pass) continue;
    ++passed;
    for (int id : {0, 2}) EXPECT_LT(spectral_abscissa(monolithic(t, id).A), 0.0);
  }
  EXPECT_GT(passed, 0);
}

TEST(Certificate, UnstableNominalViolatesTheAssumption) {
  std::mt19937_64 rng(36);
  Toy t = make_toy(rng, 0.05);
  t.plant.A += 5.0 * Mat::Identity(3, 3);
  EXPECT_THROW((void)certify_family(t.plant, t.family, t.gains), AssumptionViolated);
}

TEST(Certificate, DeltaAboveItsBoundRejected) {
  std::mt19937_64 rng(37);
  const Toy t = make_toy(rng, 0.2);
  const auto gp = assemble_lft(t.plant, t.family, t.gains);
  const Mat D = member_delta(t.family, t.gains, 2);
  EXPECT_THROW((void)certify_guas(gp, UncertaintyRealization::static_gain(D, 0.0)), ValidationError);
  UncertaintyRealization unstable = UncertaintyRealization::static_gain(D, 10.0);
  unstable.A = Mat::Constant(1, 1, 0.5);
  unstable.B = Mat::Zero(1, D.cols());
  unstable.C = Mat::Zero(D.rows(), 1);
  EXPECT_THROW((void)certify_guas(gp, unstable), ValidationError);
}

TEST(Certificate, JsonRoundTrip) {
  std::mt19937_64 rng(38);
  const Toy t = make_toy(rng, 0.05);
  const auto c = certify_family(t.plant, t.family, t.gains).certificate;
  const auto back = StabilityCertificate::from_json(c.to_json());
  EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
  EXPECT_TRUE(c.to_json().at("sufficient_only").get<bool>());
}

TEST(Certificate, WorstCaseDeltaDestabilizesBeyondTheDcGain) {
  std::mt19937_64 rng(39);
  const Toy t = make_toy(rng, 0.05);
  const auto gp = assemble_lft(t.plant, t.family, t.gains);
  const double g0 = sigma_max(loop_transfer(gp).response({0.0, 0.0}));
  const auto hi = worst_case_delta(gp, 1.05 / g0);
  EXPECT_GE(spectral_abscissa(close_lft(gp, hi).A), 0.0);
  const auto lo = worst_case_delta(gp, 0.5 / hinf_norm(loop_transfer(gp)).gamma);
  EXPECT_LT(spectral_abscissa(close_lft(gp, lo).A), 0.0);
}

TEST(Certificate, PlantFamilySplitsLoopAndOpenLoopRegimes) {
  const auto p = build_pipeline(test::small_grid_config());
  const auto fam = center_models(reduce_regimes(p));
  const auto gains = design_gains(p, fam);
  const auto fc = certify_family(plant_model(p.plant, 0), fam, gains);
  EXPECT_EQ(fc.certificate.loop_regimes, (std::vector<int>{0, 2}));
  EXPECT_EQ(fc.certificate.open_loop_regimes, (std::vector<int>{1}));
  EXPECT_LT(fc.certificate.open_loop_abscissa.at(1), 0.0);
}

// ----------------------------------------------------------------------------
// Empirical corroboration

TEST(Empirical, StableLoopDecaysAndSerialEqualsParallel) {
  std::mt19937_64 rng(40);
  LtiSystem s{test::random_stable(6, rng, 0.2), test::random_matrix(6, 2, rng), test::random_matrix(3, 6, rng),
              Mat::Zero(3, 2)};
  Excitation e;
  e.amplitude = {1.0, 0.5};
  e.on_time = 20.0;
  e.dt = 0.5;
  const auto a = empirical_sweep(s, e, 200.0, 16), b = empirical_sweep_serial(s, e, 200.0, 16);
  EXPECT_EQ(a.decaying, 16);
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_EQ(a.runs[i].tail_sup, b.runs[i].tail_sup);
    EXPECT_EQ(a.runs[i].window_max, b.runs[i].window_max);
  }
  EXPECT_LT(a.runs[0].window_max.back(), 1e-3 * a.runs[0].window_max.front());
}

TEST(Empirical, UnstableLoopIsFlagged) {
  LtiSystem s{Mat::Constant(1, 1, 0.2), Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Zero(1, 1)};
  Excitation e;
  e.amplitude = {1.0};
  e.on_time = 5.0;
  e.dt = 0.5;
  const auto r = empirical_ultimate_bound(s, e, 100.0);
  EXPECT_FALSE(r.decaying);
}

}  // namespace
}  // namespace rh
