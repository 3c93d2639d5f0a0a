#pragma once

#include "rh/layout.hpp"
#include "rh/switching_predictor.hpp"
#include "rh/thermal_plant.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace rh {

struct LotPlan {
  int n_lots = 2;
  int wafers_per_lot = 16;
  double wafer_expose_time = 10.0;  // s
  double wafer_swap_time = 2.26;    // s
  double lot_swap_time = 60.0;      // s, unclamped
  double edge_mark_time = 0.3;      // s
  ImageArea image_area;
  MarkLayout layout;

  void validate() const;
};

struct LayoutSpec {
  int marks_per_side = 5;
  int edge_marks_per_side = 3;
  double offset_mm = 4.0;
  std::vector<Mark> explicit_marks;  // used instead of the generator when non-empty
};

struct ReductionSpec {
  double s0 = 0.0;
  int k = 3;
};

struct FeedbackSpec {
  double rho = 1.5;
  double lambda = 1e-6;
  double q = 1e-9;
  double handoff_lambda = 1e-12;
};

struct UncertaintySpec {
  double reclamp_factor = 0.5;
  bool pellicle_at_reclamp = false;
};

struct SimulationSpec {
  double dt = 0.5;
  double noise_std = 0.1;
  bool feedback = true;
  bool store_fields = false;
};

struct CertificationSpec {
  int grid_points = 1000;
  double tol = 1e-4;
  double inflation = 1.0;
  int empirical_seeds = 100;
  double empirical_dt = 1.0;
  double empirical_on_time = 200.0;
  double empirical_horizon = 1600.0;
};

struct ScenarioConfig {
  PlantConfig plant;
  ImageArea image_area;
  LayoutSpec layout;
  LotPlan lotplan;  // image_area and layout are filled from the sections above
  std::optional<Scheduler> scheduler;  // default: Scheduler::standard(pellicle_at_reclamp)
  double dwell_min = 1.0;
  ReductionSpec reduction;
  FeedbackSpec feedback;
  UncertaintySpec uncertainty;
  SimulationSpec simulation;
  CertificationSpec certification;
  unsigned long long seed = 1;
  std::string output_dir = "out";

  /// Built-in default scenario (large image area).
  [[nodiscard]] static ScenarioConfig defaults() { return from_json(nlohmann::json::object()); }
  /// Parse and validate; unknown keys anywhere are rejected.
  [[nodiscard]] static ScenarioConfig from_json(const nlohmann::json& j);
  [[nodiscard]] static ScenarioConfig load(const std::filesystem::path& path);
  [[nodiscard]] nlohmann::json to_json() const;

  void validate() const;
  [[nodiscard]] Scheduler effective_scheduler() const;
  [[nodiscard]] MarkLayout effective_layout() const;
  /// FNV-1a 64 of the canonical JSON without output_dir and seed, as hex.
  [[nodiscard]] std::string hash() const;
  /// Same hash over the sections that determine the model family.
  [[nodiscard]] std::string model_hash() const;
};

}  // namespace rh
