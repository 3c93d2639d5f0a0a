#include "rh/pipeline.hpp"

#include "rh/errors.hpp"

#include <algorithm>
#include <set>

namespace rh {

Pipeline build_pipeline(const ScenarioConfig& config) {
  config.validate();
  Pipeline p;
  p.config = config;
  p.scheduler = config.effective_scheduler();
  p.layout = config.effective_layout();
  p.model_regimes = p.scheduler.regimes();

  std::set<int> phys{0, 1, 2};
  if (config.uncertainty.pellicle_at_reclamp) phys = {0, 1, 4};
  if (config.lotplan.n_lots == 1) phys = {0};
  p.physical_regimes.assign(phys.begin(), phys.end());

  std::set<int> all(phys);
  all.insert(p.model_regimes.begin(), p.model_regimes.end());
  std::vector<RegimeSpec> specs;
  for (int id : all) specs.push_back(standard_regime(id, config.uncertainty.reclamp_factor));
  p.plant = build_plant(config.plant, config.image_area, specs);

  p.meas_all.layout = p.layout;
  p.meas_all.S = p.plant.sampling(p.layout);
  p.meas_fb.layout = p.layout.with_groups({MarkGroup::top, MarkGroup::bottom});
  p.meas_fb.S = p.plant.sampling(p.meas_fb.layout);
  return p;
}

std::map<int, ReducedModel> reduce_regimes(const Pipeline& p, std::vector<ReductionReport>* report) {
  std::map<int, ReducedModel> out;
  const auto& red = p.config.reduction;
  Mat footprint = Mat::Zero(p.plant.n, 1);
  for (int k = 0; k < p.plant.n; ++k)
    if (p.plant.area.contains(p.plant.node_x(k), p.plant.node_y(k))) footprint(k, 0) = 1.0;
  for (int id : p.model_regimes) {
    const StateSpaceModel full = plant_model(p.plant, id);
    std::optional<Mat> start;
    if (full.B_e.cwiseAbs().maxCoeff() == 0.0) start = footprint;
    ReducedModel m;
    try {
      m = krylov_reduce(full, red.s0, red.k, start, id);
    } catch (const ValidationError& e) {
      throw ValidationError("reduction of regime " + std::to_string(id) + ": " + e.what());
    } catch (const std::exception& e) {
      throw NumericalError("reduction of regime " + std::to_string(id) + ": " + e.what());
    }
    if (report) {
      ReductionReport r;
      r.regime = id;
      r.moment_errors = moment_errors(full, m);
      r.pass = true;
      for (double e : r.moment_errors) r.pass = r.pass && e <= 1e-8;
      r.stabilized = m.stabilized;
      r.warnings = m.warnings;
      report->push_back(r);
    }
    out.emplace(id, std::move(m));
  }
  return out;
}

FeedbackGains design_gains(const Pipeline& p, const ModelFamily& family) {
  FeedbackGains g;
  g.S = p.meas_fb.S;
  const auto& fb = p.config.feedback;
  for (const auto& [id, m] : family.members) {
    const auto& spec = p.plant.regimes.at(id);
    if (!spec.exposing) {
      g.L[id] = Mat::Zero(m.ssm.order(), g.S.rows());
      continue;
    }
    try {
      g.L[id] = design_feedback_gain(m, p.meas_fb, fb.rho, fb.q);
    } catch (const ValidationError& e) {
      throw ValidationError("feedback design for regime " + std::to_string(id) + ": " + e.what());
    } catch (const std::exception& e) {
      throw NumericalError("feedback design for regime " + std::to_string(id) + ": " + e.what());
    }
  }
  return g;
}

ModelFamily build_family(const Pipeline& p, std::vector<ReductionReport>* report) {
  return center_models(reduce_regimes(p, report));
}

CertificationRun run_certification(const Pipeline& p, const ModelFamily& family, const FeedbackGains& gains) {
  const auto& cs = p.config.certification;
  HinfOptions opt;
  opt.grid_points = cs.grid_points;
  opt.tol = cs.tol;
  CertificationRun run;
  run.family = certify_family(plant_model(p.plant, 0), family, gains, cs.inflation, opt);
  const auto& cert = run.family.certificate;
  run.report = cert.to_json();

  if (cert.pass) {
    const LtiSystem closed = close_lft(run.family.gp, run.family.delta);
    Excitation exc;
    exc.amplitude.assign(static_cast<size_t>(closed.B.cols()), p.config.simulation.noise_std);
    exc.amplitude[0] = 1.0;
    exc.on_time = cs.empirical_on_time;
    exc.dt = cs.empirical_dt;
    run.empirical = empirical_sweep(closed, exc, cs.empirical_horizon, cs.empirical_seeds, 1);
    double worst_tail = 0.0;
    for (const auto& r : run.empirical->runs) worst_tail = std::max(worst_tail, r.tail_sup);
    run.report["empirical"] = {{"seeds", run.empirical->seeds},
                               {"decaying", run.empirical->decaying},
                               {"max_tail_sup", worst_tail},
                               {"on_time_s", cs.empirical_on_time},
                               {"horizon_s", cs.empirical_horizon},
                               {"dt_s", cs.empirical_dt}};
  } else {
    const auto wc = worst_case_delta(run.family.gp, cert.delta_bound);
    run.negative_abscissa = spectral_abscissa(close_lft(run.family.gp, wc).A);
    run.report["negative_control"] = {{"delta_norm", cert.delta_bound},
                                      {"closed_loop_abscissa", *run.negative_abscissa},
                                      {"destabilized", *run.negative_abscissa >= 0.0}};
  }
  return run;
}

}  // namespace rh
