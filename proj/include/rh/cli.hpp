#pragma once

#include "rh/model_reduction.hpp"
#include "rh/pipeline.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace rh::cli {

enum ExitCode : int { ok = 0, validation = 1, certification_failed = 2, runtime = 3 };

/// args excludes the program name, e.g. {"simulate", "--config", "c.json"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Output layout below --out:
//   family/           member_<id>.txt, family.json
//   moment_report.json
//   certificate.json
//   simulate/         per_wafer.csv, trace.csv, throughput.csv, summary.json

/// Loads the family written by `reduce` and checks it belongs to `p`'s config.
[[nodiscard]] ModelFamily load_family(const std::filesystem::path& dir, const Pipeline& p);

}  // namespace rh::cli
