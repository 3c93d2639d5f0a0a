#include "rh/config.hpp"
#include "rh/errors.hpp"
#include "rh/linalg.hpp"
#include "rh/matrix_io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

namespace rh {
namespace {

using nlohmann::json;

TEST(MatrixIo, HeaderThenRowMajorValues) {
  Mat M(2, 3);
  M << 1.0, -2.5, 0.1, 1e-300, 3.0, -0.0;
  std::ostringstream os;
  write_matrix(os, M);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "2 3");
  std::istringstream is(os.str());
  const Mat back = read_matrix(is);
  ASSERT_EQ(back.rows(), 2);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(std::memcmp(&back.data()[i], &M.data()[i], sizeof(double)), 0);
}

TEST(MatrixIo, RandomValuesRoundTripBitwise) {
  std::mt19937_64 rng(1);
  const Mat M = test::random_matrix(7, 5, rng) * 1e7;
  std::stringstream ss;
  write_matrix(ss, M);
  EXPECT_EQ(read_matrix(ss), M);
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(MatrixIo, MalformedDumpsRejected) {
  for (const char* bad : {"2 2\n1 2\n3\n", "x 2\n", "1 1\nnan?\n"}) {
    std::istringstream is(bad);
    EXPECT_THROW((void)read_matrix(is), ValidationError) << bad;
  }
}

TEST(Linalg, EigenvaluesOfKnownMatrices) {
  Mat A(2, 2);
  A << 0.0, 1.0, -2.0, -3.0;
  auto ev = eigenvalues(A);
  std::sort(ev.begin(), ev.end(), [](auto a, auto b) { return a.real() < b.real(); });
  EXPECT_NEAR(ev[0].real(), -2.0, 1e-12);
  EXPECT_NEAR(ev[1].real(), -1.0, 1e-12);
  Mat B = Mat::Zero(3, 3);
  B << -1.0, 5.0, 7.0, 0.0, -2.0, 4.0, 0.0, 0.0, -0.5;
  EXPECT_NEAR(spectral_abscissa(B), -0.5, 1e-14);
}

TEST(Linalg, RangeBasisAndSigmaMax) {
  std::mt19937_64 rng(2);
  const Mat U = test::random_matrix(6, 2, rng);
  const Mat M = U * test::random_matrix(2, 4, rng);
  const Mat Q = range_basis(M);
  EXPECT_EQ(Q.cols(), 2);
  EXPECT_LT((Q * (Q.transpose() * M) - M).norm(), 1e-12 * M.norm());
  Mat D = Mat::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = -4.0;
  EXPECT_NEAR(sigma_max(D), 4.0, 1e-14);
}

TEST(Config, DefaultsRoundTripThroughJson) {
  const auto a = ScenarioConfig::defaults();
  const auto b = ScenarioConfig::from_json(a.to_json());
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.hash(), b.hash());
}

TEST(Config, ShippedDefaultConfigEqualsBuiltInDefaults) {
  const auto c = ScenarioConfig::load(std::filesystem::path(RH_SOURCE_DIR) / "configs" / "default.json");
  EXPECT_EQ(c.hash(), ScenarioConfig::defaults().hash());
  const auto s = ScenarioConfig::load(std::filesystem::path(RH_SOURCE_DIR) / "configs" / "small_area.json");
  EXPECT_NE(s.hash(), c.hash());
  EXPECT_EQ(s.image_area.x_min, 50.0);
}

TEST(Config, HashIgnoresSeedAndOutputDir) {
  auto a = ScenarioConfig::defaults();
  auto b = a;
  b.seed = 42;
  b.output_dir = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.feedback.rho = 2.0;
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.model_hash(), b.model_hash());
  b.reduction.k = 4;
  EXPECT_NE(a.model_hash(), b.model_hash());
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  for (const char* text : {R"({"seeed": 1})", R"({"plant": {"difusivity": 1.0}})",
                           R"({"layout": {"marks": [{"x": 1, "y": 2, "grup": "top"}]}})",
                           R"({"scheduler": {"rules": [{"when": "unclamped", "regime": 1, "extra": 0}]}})"}) {
    EXPECT_THROW((void)ScenarioConfig::from_json(json::parse(text)), ValidationError) << text;
  }
}

TEST(Config, InvalidValuesRejected) {
  for (const char* text : {R"({"reduction": {"k": 0}})", R"({"plant": {"diffusivity": "fast"}})",
                           R"({"lotplan": {"wafers_per_lot": 0}})", R"({"lotplan": {"wafer_swap_time": -1}})",
                           R"({"scheduler": {"rules": [{"when": "unclamped", "regime": 1},
                                                      {"when": "reclamped", "regime": 1}]}})",
                           R"({"scheduler": {"rules": [{"when": "sometimes", "regime": 1}]}})",
                           R"({"simulation": {"dt": 0}})", R"({"feedback": {"rho": 0.5}})"}) {
    EXPECT_THROW((void)ScenarioConfig::from_json(json::parse(text)), ValidationError) << text;
  }
}

TEST(Config, MissingFileIsAValidationError) {
  EXPECT_THROW((void)ScenarioConfig::load("/nonexistent/config.json"), ValidationError);
}

}  // namespace
}  // namespace rh
