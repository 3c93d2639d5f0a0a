#include "rh/config.hpp"

#include "rh/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace rh {

using nlohmann::json;

void LotPlan::validate() const {
  if (n_lots < 1) throw ValidationError("lotplan: n_lots must be >= 1");
  if (wafers_per_lot < 1) throw ValidationError("lotplan: wafers_per_lot must be >= 1");
  const std::pair<const char*, double> times[] = {{"wafer_expose_time", wafer_expose_time},
                                                  {"wafer_swap_time", wafer_swap_time},
                                                  {"lot_swap_time", lot_swap_time},
                                                  {"edge_mark_time", edge_mark_time}};
  for (const auto& [name, v] : times)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string("lotplan: ") + name + " must be >= 0");
}

namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config: section '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ValidationError("config: unknown key '" + k + "' in section '" + section + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: key '" + std::string(key) + "' in section '" + section + "' has the wrong type");
  }
}

}  // namespace

ScenarioConfig ScenarioConfig::from_json(const json& j) {
  ScenarioConfig c;
  check_keys(j, "<root>",
             {"plant", "image_area", "layout", "lotplan", "scheduler", "reduction", "feedback", "uncertainty",
              "simulation", "certification", "seed", "output_dir"});
  if (j.contains("plant")) {
    const auto& s = j["plant"];
    check_keys(s, "plant",
               {"grid_nx", "grid_ny", "reticle_side", "diffusivity", "loss_ambient", "clamp_conductance",
                "cooling_flow", "absorption", "pellicle_factor", "expansion_coeff"});
    read(s, "grid_nx", c.plant.grid_nx, "plant");
    read(s, "grid_ny", c.plant.grid_ny, "plant");
    read(s, "reticle_side", c.plant.reticle_side, "plant");
    read(s, "diffusivity", c.plant.diffusivity, "plant");
    read(s, "loss_ambient", c.plant.loss_ambient, "plant");
    read(s, "clamp_conductance", c.plant.clamp_conductance, "plant");
    read(s, "cooling_flow", c.plant.cooling_flow, "plant");
    read(s, "absorption", c.plant.absorption, "plant");
    read(s, "pellicle_factor", c.plant.pellicle_factor, "plant");
    read(s, "expansion_coeff", c.plant.expansion_coeff, "plant");
  }
  if (j.contains("image_area")) {
    const auto& s = j["image_area"];
    check_keys(s, "image_area", {"x_min", "x_max", "y_min", "y_max", "exposure_power"});
    read(s, "x_min", c.image_area.x_min, "image_area");
    read(s, "x_max", c.image_area.x_max, "image_area");
    read(s, "y_min", c.image_area.y_min, "image_area");
    read(s, "y_max", c.image_area.y_max, "image_area");
    read(s, "exposure_power", c.image_area.exposure_power, "image_area");
  }
  if (j.contains("layout")) {
    const auto& s = j["layout"];
    check_keys(s, "layout", {"marks_per_side", "edge_marks_per_side", "offset_mm", "marks"});
    read(s, "marks_per_side", c.layout.marks_per_side, "layout");
    read(s, "edge_marks_per_side", c.layout.edge_marks_per_side, "layout");
    read(s, "offset_mm", c.layout.offset_mm, "layout");
    if (s.contains("marks")) {
      if (!s["marks"].is_array()) throw ValidationError("config: layout.marks must be an array");
      for (const auto& m : s["marks"]) {
        check_keys(m, "layout.marks[]", {"x", "y", "group"});
        Mark mk;
        read(m, "x", mk.x, "layout.marks[]");
        read(m, "y", mk.y, "layout.marks[]");
        std::string g = "top";
        read(m, "group", g, "layout.marks[]");
        mk.group = mark_group_from_string(g);
        c.layout.explicit_marks.push_back(mk);
      }
    }
  }
  if (j.contains("lotplan")) {
    const auto& s = j["lotplan"];
    check_keys(s, "lotplan",
               {"n_lots", "wafers_per_lot", "wafer_expose_time", "wafer_swap_time", "lot_swap_time",
                "edge_mark_time"});
    read(s, "n_lots", c.lotplan.n_lots, "lotplan");
    read(s, "wafers_per_lot", c.lotplan.wafers_per_lot, "lotplan");
    read(s, "wafer_expose_time", c.lotplan.wafer_expose_time, "lotplan");
    read(s, "wafer_swap_time", c.lotplan.wafer_swap_time, "lotplan");
    read(s, "lot_swap_time", c.lotplan.lot_swap_time, "lotplan");
    read(s, "edge_mark_time", c.lotplan.edge_mark_time, "lotplan");
  }
  if (j.contains("scheduler")) {
    const auto& s = j["scheduler"];
    check_keys(s, "scheduler", {"dwell_min", "rules"});
    read(s, "dwell_min", c.dwell_min, "scheduler");
    if (s.contains("rules")) {
      if (!s["rules"].is_array()) throw ValidationError("config: scheduler.rules must be an array");
      Scheduler sch;
      for (const auto& r : s["rules"]) {
        check_keys(r, "scheduler.rules[]", {"when", "regime"});
        if (!r.contains("when") || !r.contains("regime"))
          throw ValidationError("config: scheduler rule needs 'when' and 'regime'");
        SchedulerRule rule;
        std::string when;
        read(r, "when", when, "scheduler.rules[]");
        rule.when = predicate_from_string(when);
        read(r, "regime", rule.regime, "scheduler.rules[]");
        sch.rules.push_back(rule);
      }
      c.scheduler = sch;
    }
  }
  if (j.contains("reduction")) {
    const auto& s = j["reduction"];
    check_keys(s, "reduction", {"s0", "k"});
    read(s, "s0", c.reduction.s0, "reduction");
    read(s, "k", c.reduction.k, "reduction");
  }
  if (j.contains("feedback")) {
    const auto& s = j["feedback"];
    check_keys(s, "feedback", {"rho", "lambda", "q", "handoff_lambda"});
    read(s, "rho", c.feedback.rho, "feedback");
    read(s, "lambda", c.feedback.lambda, "feedback");
    read(s, "q", c.feedback.q, "feedback");
    read(s, "handoff_lambda", c.feedback.handoff_lambda, "feedback");
  }
  if (j.contains("uncertainty")) {
    const auto& s = j["uncertainty"];
    check_keys(s, "uncertainty", {"reclamp_factor", "pellicle_at_reclamp"});
    read(s, "reclamp_factor", c.uncertainty.reclamp_factor, "uncertainty");
    read(s, "pellicle_at_reclamp", c.uncertainty.pellicle_at_reclamp, "uncertainty");
  }
  if (j.contains("simulation")) {
    const auto& s = j["simulation"];
    check_keys(s, "simulation", {"dt", "noise_std", "feedback", "store_fields"});
    read(s, "dt", c.simulation.dt, "simulation");
    read(s, "noise_std", c.simulation.noise_std, "simulation");
    read(s, "feedback", c.simulation.feedback, "simulation");
    read(s, "store_fields", c.simulation.store_fields, "simulation");
  }
  if (j.contains("certification")) {
    const auto& s = j["certification"];
    check_keys(s, "certification",
               {"grid_points", "tol", "inflation", "empirical_seeds", "empirical_dt", "empirical_on_time",
                "empirical_horizon"});
    read(s, "grid_points", c.certification.grid_points, "certification");
    read(s, "tol", c.certification.tol, "certification");
    read(s, "inflation", c.certification.inflation, "certification");
    read(s, "empirical_seeds", c.certification.empirical_seeds, "certification");
    read(s, "empirical_dt", c.certification.empirical_dt, "certification");
    read(s, "empirical_on_time", c.certification.empirical_on_time, "certification");
    read(s, "empirical_horizon", c.certification.empirical_horizon, "certification");
  }
  read(j, "seed", c.seed, "<root>");
  read(j, "output_dir", c.output_dir, "<root>");
  c.validate();
  c.lotplan.image_area = c.image_area;
  c.lotplan.layout = c.effective_layout();
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

Scheduler ScenarioConfig::effective_scheduler() const {
  Scheduler s = scheduler ? *scheduler : Scheduler::standard(uncertainty.pellicle_at_reclamp);
  s.dwell_min = dwell_min;
  return s;
}

MarkLayout ScenarioConfig::effective_layout() const {
  if (!layout.explicit_marks.empty()) {
    MarkLayout l;
    l.marks = layout.explicit_marks;
    return l;
  }
  return standard_layout(image_area, layout.marks_per_side, layout.edge_marks_per_side, layout.offset_mm);
}

void ScenarioConfig::validate() const {
  plant.validate();
  image_area.validate(plant);
  lotplan.validate();
  effective_scheduler().validate();
  for (int id : effective_scheduler().regimes()) (void)standard_regime(id, uncertainty.reclamp_factor);
  if (reduction.k < 1) throw ValidationError("reduction: k must be >= 1");
  if (!std::isfinite(reduction.s0)) throw ValidationError("reduction: s0 must be finite");
  if (!(feedback.rho > 1.0)) throw ValidationError("feedback: rho must be > 1");
  if (!(feedback.lambda > 0.0) || !(feedback.q > 0.0) || !(feedback.handoff_lambda >= 0.0))
    throw ValidationError("feedback: lambda and q must be > 0, handoff_lambda >= 0");
  if (!(simulation.dt > 0.0)) throw ValidationError("simulation: dt must be > 0");
  if (!(simulation.noise_std >= 0.0)) throw ValidationError("simulation: noise_std must be >= 0");
  if (certification.grid_points < 10) throw ValidationError("certification: grid_points must be >= 10");
  if (!(certification.tol > 0.0)) throw ValidationError("certification: tol must be > 0");
  if (!(certification.inflation > 0.0)) throw ValidationError("certification: inflation must be > 0");
  if (certification.empirical_seeds < 0) throw ValidationError("certification: empirical_seeds must be >= 0");
  if (!(certification.empirical_dt > 0.0) || !(certification.empirical_on_time >= 0.0) ||
      !(certification.empirical_horizon > certification.empirical_on_time))
    throw ValidationError("certification: need empirical_dt > 0 and empirical_horizon > empirical_on_time");
  if (layout.explicit_marks.empty() && (layout.marks_per_side < 1 || layout.edge_marks_per_side < 0))
    throw ValidationError("layout: marks_per_side must be >= 1 and edge_marks_per_side >= 0");
  const auto l = effective_layout();
  for (const auto& m : l.marks)
    if (!(m.x >= 0.0 && m.x <= plant.reticle_side && m.y >= 0.0 && m.y <= plant.reticle_side))
      throw ValidationError("layout: mark outside the reticle");
  if (l.with_groups({MarkGroup::top, MarkGroup::bottom}).active().empty())
    throw ValidationError("layout: feedback needs at least one top or bottom mark");
}

json ScenarioConfig::to_json() const {
  json j;
  j["plant"] = {{"grid_nx", plant.grid_nx},
                {"grid_ny", plant.grid_ny},
                {"reticle_side", plant.reticle_side},
                {"diffusivity", plant.diffusivity},
                {"loss_ambient", plant.loss_ambient},
                {"clamp_conductance", plant.clamp_conductance},
                {"cooling_flow", plant.cooling_flow},
                {"absorption", plant.absorption},
                {"pellicle_factor", plant.pellicle_factor},
                {"expansion_coeff", plant.expansion_coeff}};
  j["image_area"] = {{"x_min", image_area.x_min},
                     {"x_max", image_area.x_max},
                     {"y_min", image_area.y_min},
                     {"y_max", image_area.y_max},
                     {"exposure_power", image_area.exposure_power}};
  j["layout"] = {{"marks_per_side", layout.marks_per_side},
                 {"edge_marks_per_side", layout.edge_marks_per_side},
                 {"offset_mm", layout.offset_mm}};
  if (!layout.explicit_marks.empty()) {
    json arr = json::array();
    for (const auto& m : layout.explicit_marks) arr.push_back({{"x", m.x}, {"y", m.y}, {"group", to_string(m.group)}});
    j["layout"]["marks"] = arr;
  }
  j["lotplan"] = {{"n_lots", lotplan.n_lots},
                  {"wafers_per_lot", lotplan.wafers_per_lot},
                  {"wafer_expose_time", lotplan.wafer_expose_time},
                  {"wafer_swap_time", lotplan.wafer_swap_time},
                  {"lot_swap_time", lotplan.lot_swap_time},
                  {"edge_mark_time", lotplan.edge_mark_time}};
  json rules = json::array();
  for (const auto& r : effective_scheduler().rules) rules.push_back({{"when", to_string(r.when)}, {"regime", r.regime}});
  j["scheduler"] = {{"dwell_min", dwell_min}, {"rules", rules}};
  j["reduction"] = {{"s0", reduction.s0}, {"k", reduction.k}};
  j["feedback"] = {{"rho", feedback.rho},
                   {"lambda", feedback.lambda},
                   {"q", feedback.q},
                   {"handoff_lambda", feedback.handoff_lambda}};
  j["uncertainty"] = {{"reclamp_factor", uncertainty.reclamp_factor},
                      {"pellicle_at_reclamp", uncertainty.pellicle_at_reclamp}};
  j["simulation"] = {{"dt", simulation.dt},
                     {"noise_std", simulation.noise_std},
                     {"feedback", simulation.feedback},
                     {"store_fields", simulation.store_fields}};
  j["certification"] = {{"grid_points", certification.grid_points},
                        {"tol", certification.tol},
                        {"inflation", certification.inflation},
                        {"empirical_seeds", certification.empirical_seeds},
                        {"empirical_dt", certification.empirical_dt},
                        {"empirical_on_time", certification.empirical_on_time},
                        {"empirical_horizon", certification.empirical_horizon}};
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  return j;
}

namespace {

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string ScenarioConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  j.erase("seed");
  return fnv1a_hex(j.dump());
}

std::string ScenarioConfig::model_hash() const {
  const json full = to_json();
  json j;
  for (const char* k : {"plant", "image_area", "layout", "lotplan", "scheduler", "reduction", "uncertainty"})
    j[k] = full.at(k);
  return fnv1a_hex(j.dump());
}

}  // namespace rh
