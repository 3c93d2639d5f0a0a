#pragma once

#include "rh/config.hpp"
#include "rh/model_reduction.hpp"
#include "rh/stability_certifier.hpp"
#include "rh/switching_predictor.hpp"
#include "rh/thermal_plant.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rh {

enum class Strategy { proposed, linear_only, status_quo };

[[nodiscard]] std::string to_string(Strategy s);
[[nodiscard]] Strategy strategy_from_string(const std::string& s);

struct ScenarioOptions {
  double dt = 0.5;
  double noise_std = 0.1;
  unsigned long long seed = 1;
  bool feedback = true;
  double lambda = 1e-6;
  double handoff_lambda = 1e-12;
  bool store_fields = false;
};

struct StepRecord {
  double t = 0.0;           // end of the step
  int plant_regime = 0;
  double mean_temp = 0.0;   // K above ambient
  bool exposing = false;
  std::vector<int> model_regime;  // per strategy (status_quo: -1)
  std::vector<double> rms;        // per strategy, image area, both axes
};

struct WaferRecord {
  int lot = 0, wafer = 0;
  double t_align = 0.0;
  double temp_align = 0.0, temp_exposed = 0.0, temp_swapped = 0.0;
  // per strategy: {max_x, rms_x, max_y, rms_y, max_xy, rms_xy}
  std::vector<std::array<double, 6>> err;
};

struct SwitchRecord {
  double t = 0.0;
  Strategy strategy = Strategy::proposed;
  int from = 0, to = 0;
  double jump = 0.0;  // nm, within range(C_next)
};

struct ScenarioTrace {
  std::vector<Strategy> strategies;
  std::vector<StepRecord> steps;
  std::vector<WaferRecord> wafers;
  std::vector<SwitchRecord> switches;
  HistoryLog history;
  // store_fields only: true z and per-strategy ẑ on the image area at each step
  std::vector<Vec> z;
  std::vector<std::vector<Vec>> zhat;

  [[nodiscard]] int index_of(Strategy s) const;
};

/// Simulates the lot timeline. All strategies share one plant path and one
/// noise draw per alignment.
[[nodiscard]] ScenarioTrace run_scenario(const FullOrderPlant& plant, const ModelFamily& family,
                                         const FeedbackGains& gains, const Scheduler& scheduler,
                                         const LotPlan& lotplan, const std::vector<Strategy>& strategies,
                                         const ScenarioOptions& opt, bool pellicle_at_reclamp = false);

// ============================================================================
// Metrics
// ============================================================================

struct WaferMetric {
  int lot = 0, wafer = 0;
  Strategy strategy = Strategy::proposed;
  std::string axis;  // x, y, xy
  double max_nm = 0.0, rms_nm = 0.0;
};

struct LotBreakout {
  int lot = 0;
  Strategy strategy = Strategy::proposed;
  double first_wafers_rms = 0.0;  // mean of the first two wafers' xy RMS
  double rest_rms = 0.0;
};

struct MetricsTable {
  std::vector<WaferMetric> rows;
  Strategy reference = Strategy::status_quo;
  /// ratio[strategy][wafer index] = xy RMS / reference xy RMS
  std::vector<std::vector<double>> ratio_vs_reference;
  std::vector<LotBreakout> breakouts;

  [[nodiscard]] double rms(int lot, int wafer, Strategy s, const std::string& axis = "xy") const;
};

[[nodiscard]] MetricsTable compare_strategies(const ScenarioTrace& trace);

struct ThroughputFigures {
  std::string variant;
  double cycle_s = 0.0;
  double wph = 0.0;
  double gain_wph = 0.0;
};

/// wph = 3600/cycle; gain = wph(skip) − wph(no skip). The first element is
/// the requested variant; lot-swap amortized figures follow.
[[nodiscard]] std::vector<ThroughputFigures> throughput_report(const LotPlan& lotplan, bool skip_edge_marks);

// ============================================================================
// Output
// ============================================================================

struct RunMeta {
  std::string config_hash;
  unsigned long long seed = 0;
  std::optional<nlohmann::json> certificate;
  bool forced = false;
};

/// per_wafer.csv, trace.csv, throughput.csv and summary.json; byte-stable.
void emit_results(const ScenarioTrace& trace, const MetricsTable& metrics,
                  const std::vector<ThroughputFigures>& throughput, const RunMeta& meta,
                  const std::filesystem::path& out_dir);

[[nodiscard]] std::vector<WaferMetric> read_per_wafer_csv(const std::filesystem::path& path);

}  // namespace rh
