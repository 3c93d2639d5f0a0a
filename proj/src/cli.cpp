#include "rh/cli.hpp"

#include "rh/errors.hpp"
#include "rh/experiment_harness.hpp"
#include "rh/matrix_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <map>
#include <ostream>

namespace rh::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<unsigned long long> seed;
  std::optional<std::string> out;
  bool force = false;
  bool overwrite = false;
};

ScenarioConfig load_config(const Options& o) {
  ScenarioConfig c = o.config.empty() ? ScenarioConfig::defaults() : ScenarioConfig::load(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  c.validate();
  return c;
}

void require_absent(const fs::path& p, bool overwrite) {
  if (fs::exists(p) && !overwrite)
    throw ValidationError(p.string() + " already exists (pass --overwrite to replace it)");
}

fs::path fresh_tmp(const fs::path& final_dir) {
  fs::path tmp = final_dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  return tmp;
}

void publish_dir(const fs::path& tmp, const fs::path& final_dir) {
  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
}

std::string member_file(int id) { return "member_" + std::to_string(id) + ".txt"; }

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

// ----------------------------------------------------------------------------

int cmd_reduce(const ScenarioConfig& cfg, const Options& o, std::ostream& out) {
  const fs::path root = cfg.output_dir;
  const fs::path fam_dir = root / "family";
  require_absent(fam_dir, o.overwrite);
  require_absent(root / "moment_report.json", o.overwrite);

  const Pipeline p = build_pipeline(cfg);
  std::vector<ReductionReport> rep;
  const ModelFamily family = build_family(p, &rep);

  json members = json::array();
  fs::create_directories(root);
  const fs::path tmp = fresh_tmp(fam_dir);
  for (const auto& [id, m] : family.members) {
    const double scaling = id == family.nominal.regime ? 0.0 : family.deltas.at(id).scaling;
    save_reduced_model(tmp / member_file(id), m, scaling);
    members.push_back({{"regime", id}, {"file", member_file(id)}, {"order", m.ssm.order()}, {"scaling", scaling}});
  }
  json fj = {{"format", "rh.family"},
             {"model_hash", cfg.model_hash()},
             {"nominal", family.nominal.regime},
             {"members", members}};
  write_file_atomic(tmp / "family.json", fj.dump(2) + "\n");

  json mr = json::array();
  bool all_pass = true;
  for (const auto& r : rep) {
    mr.push_back({{"regime", r.regime},
                  {"moment_errors", r.moment_errors},
                  {"pass", r.pass},
                  {"stabilized", r.stabilized},
                  {"warnings", r.warnings}});
    all_pass = all_pass && r.pass;
  }
  json report = {{"s0", cfg.reduction.s0}, {"k", cfg.reduction.k}, {"tolerance", 1e-8},
                 {"all_pass", all_pass}, {"regimes", mr}};
  publish_dir(tmp, fam_dir);
  write_file_atomic(root / "moment_report.json", report.dump(2) + "\n");

  out << "reduced " << family.members.size() << " regimes (k=" << cfg.reduction.k
      << "), moment match " << (all_pass ? "pass" : "FAIL") << "\n";
  for (const auto& r : rep) {
    double worst = 0.0;
    for (double e : r.moment_errors) worst = std::max(worst, e);
    out << "  regime " << r.regime << ": max relative moment error " << format_double(worst)
        << (r.stabilized ? " (stabilized)" : "") << "\n";
  }
  return all_pass ? ExitCode::ok : ExitCode::runtime;
}

int cmd_certify(const ScenarioConfig& cfg, const Options& o, std::ostream& out) {
  const fs::path root = cfg.output_dir;
  const fs::path cert_path = root / "certificate.json";
  require_absent(cert_path, o.overwrite);

  const Pipeline p = build_pipeline(cfg);
  const ModelFamily family = load_family(root / "family", p);
  const FeedbackGains gains = design_gains(p, family);
  CertificationRun run = run_certification(p, family, gains);
  run.report["config_hash"] = cfg.hash();
  run.report["model_hash"] = cfg.model_hash();
  write_file_atomic(cert_path, run.report.dump(2) + "\n");

  const auto& c = run.family.certificate;
  out << "gamma " << format_double(c.gamma) << ", delta_bound " << format_double(c.delta_bound) << ", margin "
      << format_double(c.margin) << ": " << (c.pass ? "PASS" : "FAIL") << "\n";
  if (run.empirical)
    out << "empirical decay: " << run.empirical->decaying << "/" << run.empirical->seeds << " seeds\n";
  if (run.negative_abscissa)
    out << "worst-case delta at the bound: closed-loop abscissa " << format_double(*run.negative_abscissa) << "\n";
  return c.pass ? ExitCode::ok : ExitCode::certification_failed;
}

int cmd_simulate(const ScenarioConfig& cfg, const Options& o, std::ostream& out) {
  const fs::path root = cfg.output_dir;
  const fs::path sim_dir = root / "simulate";
  require_absent(sim_dir, o.overwrite);

  const Pipeline p = build_pipeline(cfg);
  const ModelFamily family = load_family(root / "family", p);

  std::optional<json> cert;
  const fs::path cert_path = root / "certificate.json";
  if (fs::exists(cert_path)) {
    json c = read_json(cert_path);
    if (c.value("config_hash", std::string()) == cfg.hash()) cert = c;
  }
  if (!o.force) {
    if (!cert) throw ValidationError("no certificate for this config in " + root.string() + " (run certify or pass --force)");
    if (!cert->value("pass", false)) {
      out << "certificate failed; refusing to simulate without --force\n";
      return ExitCode::certification_failed;
    }
  }

  const FeedbackGains gains = design_gains(p, family);
  ScenarioOptions opt;
  opt.dt = cfg.simulation.dt;
  opt.noise_std = cfg.simulation.noise_std;
  opt.seed = cfg.seed;
  opt.feedback = cfg.simulation.feedback;
  opt.lambda = cfg.feedback.lambda;
  opt.handoff_lambda = cfg.feedback.handoff_lambda;
  opt.store_fields = cfg.simulation.store_fields;
  const std::vector<Strategy> strategies{Strategy::proposed, Strategy::linear_only, Strategy::status_quo};
  const ScenarioTrace trace = run_scenario(p.plant, family, gains, p.scheduler, cfg.lotplan, strategies, opt,
                                           cfg.uncertainty.pellicle_at_reclamp);
  const MetricsTable metrics = compare_strategies(trace);
  auto tp = throughput_report(cfg.lotplan, false);
  for (auto& f : throughput_report(cfg.lotplan, true)) tp.push_back(f);

  RunMeta meta;
  meta.config_hash = cfg.hash();
  meta.seed = cfg.seed;
  meta.certificate = cert;
  meta.forced = o.force;

  fs::create_directories(root);
  const fs::path tmp = fresh_tmp(sim_dir);
  emit_results(trace, metrics, tp, meta, tmp);
  publish_dir(tmp, sim_dir);

  out << "simulated " << trace.wafers.size() << " wafers x " << strategies.size() << " strategies, "
      << trace.switches.size() << " model switches" << (o.force ? " (forced)" : "") << "\n";
  return ExitCode::ok;
}

int cmd_report(const ScenarioConfig& cfg, std::ostream& out) {
  const fs::path root = cfg.output_dir;
  bool any = false;
  if (fs::exists(root / "moment_report.json")) {
    const json mr = read_json(root / "moment_report.json");
    out << "reduction: " << mr.at("regimes").size() << " regimes, k=" << mr.at("k").get<int>()
        << ", moment match " << (mr.at("all_pass").get<bool>() ? "pass" : "FAIL") << "\n";
    any = true;
  }
  if (fs::exists(root / "certificate.json")) {
    const json c = read_json(root / "certificate.json");
    out << "certificate: gamma " << format_double(c.at("gamma").get<double>()) << ", delta_bound "
        << format_double(c.at("delta_bound").get<double>()) << ", margin "
        << format_double(c.at("margin").get<double>()) << ", " << (c.at("pass").get<bool>() ? "pass" : "FAIL");
    if (c.contains("empirical"))
      out << ", empirical " << c["empirical"]["decaying"].get<int>() << "/" << c["empirical"]["seeds"].get<int>();
    out << "\n";
    any = true;
  }
  const fs::path pw = root / "simulate" / "per_wafer.csv";
  if (fs::exists(pw)) {
    const auto rows = read_per_wafer_csv(pw);
    std::map<std::pair<int, Strategy>, std::pair<double, int>> acc;
    for (const auto& r : rows) {
      if (r.axis != "xy") continue;
      auto& a = acc[{r.lot, r.strategy}];
      a.first += r.rms_nm;
      a.second += 1;
    }
    out << "mean per-wafer RMS (xy, nm):\n";
    for (const auto& [k, v] : acc)
      out << "  lot " << k.first << " " << to_string(k.second) << ": " << format_double(v.first / v.second) << "\n";
    const std::string tp = read_file(root / "simulate" / "throughput.csv");
    out << "throughput:\n" << tp;
    any = true;
  }
  if (!any) throw ValidationError("nothing to report in " + root.string());
  return ExitCode::ok;
}

}  // namespace

ModelFamily load_family(const fs::path& dir, const Pipeline& p) {
  const fs::path fj_path = dir / "family.json";
  if (!fs::exists(fj_path)) throw ValidationError("missing family file " + fj_path.string() + " (run reduce first)");
  const json fj = read_json(fj_path);
  if (fj.value("format", std::string()) != "rh.family") throw ValidationError(fj_path.string() + ": not a family file");
  if (fj.value("model_hash", std::string()) != p.config.model_hash())
    throw ValidationError(fj_path.string() + ": family was reduced from a different model configuration");
  std::map<int, ReducedModel> members;
  for (const auto& m : fj.at("members")) {
    const int id = m.at("regime").get<int>();
    members.emplace(id, load_reduced_model(dir / m.at("file").get<std::string>()));
  }
  for (int id : p.model_regimes)
    if (!members.count(id)) throw ValidationError(fj_path.string() + ": no member for regime " + std::to_string(id));
  return center_models(members);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reticle-heating switching predictor: reduce, certify, simulate, report"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "scenario config (JSON); defaults when omitted");
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", o.out, "override the output directory");
    sub->add_flag("--force", o.force, "simulate without a passing certificate");
    sub->add_flag("--overwrite", o.overwrite, "replace existing outputs");
  };
  auto* reduce = app.add_subcommand("reduce", "reduce every regime and write the model family");
  auto* certify = app.add_subcommand("certify", "small-gain certificate for the family");
  auto* simulate = app.add_subcommand("simulate", "run the lot scenario and write metrics");
  auto* report = app.add_subcommand("report", "summarize existing outputs");
  for (auto* s : {reduce, certify, simulate, report}) add_common(s);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? ExitCode::ok : ExitCode::validation;
  }

  try {
    const ScenarioConfig cfg = load_config(o);
    if (reduce->parsed()) return cmd_reduce(cfg, o, out);
    if (certify->parsed()) return cmd_certify(cfg, o, out);
    if (simulate->parsed()) return cmd_simulate(cfg, o, out);
    return cmd_report(cfg, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return ExitCode::validation;
  } catch (const AssumptionViolated& e) {
    err << "error: " << e.what() << "\n";
    return ExitCode::runtime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return ExitCode::runtime;
  }
}

}  // namespace rh::cli
