#pragma once

#include "rh/config.hpp"
#include "rh/model_reduction.hpp"
#include "rh/stability_certifier.hpp"
#include "rh/switching_predictor.hpp"
#include "rh/thermal_plant.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <vector>

namespace rh {

/// Everything derived deterministically from a ScenarioConfig.
struct Pipeline {
  ScenarioConfig config;
  FullOrderPlant plant;
  Scheduler scheduler;
  MarkLayout layout;         // all groups
  MeasurementMap meas_all;   // top, bottom and edge
  MeasurementMap meas_fb;    // top and bottom: the predictors' feedback layout
  std::vector<int> model_regimes;
  std::vector<int> physical_regimes;
};

[[nodiscard]] Pipeline build_pipeline(const ScenarioConfig& config);

struct ReductionReport {
  int regime = 0;
  std::vector<double> moment_errors;
  bool pass = false;
  bool stabilized = false;
  std::vector<std::string> warnings;
};

/// Krylov reduction of every model regime. The unclamped regime (zero B_e)
/// uses the image-area footprint as its Krylov start block.
[[nodiscard]] std::map<int, ReducedModel> reduce_regimes(const Pipeline& p,
                                                         std::vector<ReductionReport>* report = nullptr);

/// Observer gains for every family member; regimes without exposure (no
/// alignment measurements) get a zero gain.
[[nodiscard]] FeedbackGains design_gains(const Pipeline& p, const ModelFamily& family);

/// reduce_regimes followed by centering.
[[nodiscard]] ModelFamily build_family(const Pipeline& p, std::vector<ReductionReport>* report = nullptr);

struct CertificationRun {
  FamilyCertification family;
  std::optional<SeedSweep> empirical;  // passing certificates only
  std::optional<double> negative_abscissa;  // failing ones: worst-case Δ closed loop
  nlohmann::json report;
};

/// Certificate for the family under the config's gains and inflation. A
/// passing certificate is corroborated by the seed sweep; a failing one by
/// the worst-case static Δ of the inflated bound.
[[nodiscard]] CertificationRun run_certification(const Pipeline& p, const ModelFamily& family,
                                                 const FeedbackGains& gains);

}  // namespace rh
