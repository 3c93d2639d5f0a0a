#pragma once

#include "rh/config.hpp"
#include "rh/linalg.hpp"
#include "rh/pipeline.hpp"

#include <random>

namespace rh::test {

/// Random Hurwitz matrix: −(MᵀM + shift·I) plus a small skew part.
inline Mat random_stable(int n, std::mt19937_64& rng, double shift = 0.5) {
  std::normal_distribution<double> N(0.0, 1.0);
  Mat M(n, n), K(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = N(rng), K(i, j) = N(rng);
  const Mat S = K - K.transpose();
  return -(M.transpose() * M / n + shift * Mat::Identity(n, n)) + 0.3 * S;
}

inline Mat random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  Mat M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = N(rng);
  return M;
}

/// Coarse plant for fast unit tests: 11 × 11 nodes on the standard reticle.
inline ScenarioConfig small_grid_config() {
  ScenarioConfig c = ScenarioConfig::defaults();
  c.plant.grid_nx = 11;
  c.plant.grid_ny = 11;
  c.validate();
  return c;
}

}  // namespace rh::test
