#include "rh/experiment_harness.hpp"

#include "rh/errors.hpp"
#include "rh/matrix_io.hpp"
#include "rh/status_quo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace rh {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::proposed: return "proposed";
    case Strategy::linear_only: return "linear_only";
    case Strategy::status_quo: return "status_quo";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  for (auto v : {Strategy::proposed, Strategy::linear_only, Strategy::status_quo})
    if (to_string(v) == s) return v;
  throw ValidationError("unknown strategy '" + s + "'");
}

int ScenarioTrace::index_of(Strategy s) const {
  for (size_t i = 0; i < strategies.size(); ++i)
    if (strategies[i] == s) return static_cast<int>(i);
  return -1;
}

// ============================================================================
// Scenario
// ============================================================================

namespace {

int steps_for(double seconds, double dt) { return static_cast<int>(std::llround(seconds / dt)); }

struct WaferAccum {
  double ssx = 0.0, ssy = 0.0, mx = 0.0, my = 0.0;
  long count = 0;
};

}  // namespace

ScenarioTrace run_scenario(const FullOrderPlant& plant, const ModelFamily& family, const FeedbackGains& gains,
                           const Scheduler& scheduler, const LotPlan& lotplan,
                           const std::vector<Strategy>& strategies, const ScenarioOptions& opt,
                           bool pellicle_at_reclamp) {
  lotplan.validate();
  scheduler.validate();
  if (strategies.empty()) throw ValidationError("run_scenario: no strategies");
  if (!(opt.dt > 0.0)) throw ValidationError("run_scenario: dt must be > 0");

  ScenarioTrace tr;
  tr.strategies = strategies;
  const int ns = static_cast<int>(strategies.size());

  MeasurementMap meas_all{lotplan.layout, plant.sampling(lotplan.layout)};
  MeasurementMap meas_fb{lotplan.layout.with_groups({MarkGroup::top, MarkGroup::bottom}), {}};
  meas_fb.S = plant.sampling(meas_fb.layout);
  if (gains.S.rows() != meas_fb.S.rows() || gains.S.cols() != meas_fb.S.cols() ||
      (gains.S - meas_fb.S).cwiseAbs().maxCoeff() != 0.0)
    throw ValidationError("run_scenario: gains were designed for a different mark layout");
  std::vector<int> fb_idx;
  {
    const auto act = meas_all.layout.active();
    for (size_t i = 0; i < act.size(); ++i)
      if (act[i].group != MarkGroup::edge) fb_idx.push_back(static_cast<int>(i));
  }
  const int m_all = static_cast<int>(meas_all.layout.active().size());

  std::map<int, std::shared_ptr<const PredictorModel>> bank;
  for (const auto& [id, m] : family.members) {
    auto pm = std::make_shared<PredictorModel>();
    pm->model = m;
    pm->L = gains.L.at(id);
    bank.emplace(id, std::move(pm));
  }

  std::vector<PredictorState> ps(ns);
  for (int s = 0; s < ns; ++s) {
    if (strategies[s] == Strategy::status_quo) continue;
    ps[s].model = bank.at(0);
    ps[s].xhat = Vec::Zero(family.nominal.ssm.order());
  }
  Vec sq = Vec::Zero(2 * plant.n);

  const auto rows = plant.image_area_rows();
  const int n_img = static_cast<int>(rows.size() / 2);
  PlantStepper stepper(plant, opt.dt);
  std::mt19937_64 rng(opt.seed);
  const Scheduler physical = Scheduler::standard(true);

  Vec x = Vec::Zero(plant.n);
  double t = 0.0;
  auto emit = [&](EventKind k) { tr.history.push({t, k, -1, {}}); };

  auto sync_regimes = [&]() {
    const int want = classify_regime(scheduler, tr.history, t);
    for (int s = 0; s < ns; ++s) {
      if (strategies[s] != Strategy::proposed) continue;
      if (ps[s].model->regime() == want) continue;
      auto it = bank.find(want);
      if (it == bank.end()) throw ValidationError("scheduler selected regime " + std::to_string(want) + " outside the family");
      PredictorState next = handoff(ps[s], it->second, t, opt.handoff_lambda);
      tr.switches.push_back({t, strategies[s], ps[s].model->regime(), want, handoff_jump(ps[s], next)});
      ps[s] = std::move(next);
    }
  };

  std::vector<WaferAccum> acc(ns);
  auto advance = [&](double u_e, int nsteps, bool exposing) {
    for (int k = 0; k < nsteps; ++k) {
      sync_regimes();
      const int phys = target_regime(physical, tr.history);
      x = stepper.step(x, u_e, phys);
      for (int s = 0; s < ns; ++s) {
        if (strategies[s] == Strategy::status_quo) continue;
        ps[s] = predictor_step(ps[s], u_e, std::nullopt, meas_fb, opt.dt, opt.lambda).state;
      }
      t += opt.dt;
      const Vec z = plant.C_z * x;
      StepRecord rec;
      rec.t = t;
      rec.plant_regime = phys;
      rec.mean_temp = x.mean();
      rec.exposing = exposing;
      if (opt.store_fields) {
        Vec zi(rows.size());
        for (size_t i = 0; i < rows.size(); ++i) zi(i) = z(rows[i]);
        tr.z.push_back(zi);
        tr.zhat.emplace_back();
      }
      for (int s = 0; s < ns; ++s) {
        const bool model_based = strategies[s] != Strategy::status_quo;
        const Vec zh = model_based ? Vec(ps[s].model->model.ssm.C * ps[s].xhat) : sq;
        double ss = 0.0, ssx = 0.0, ssy = 0.0, mx = 0.0, my = 0.0;
        for (int i = 0; i < n_img; ++i) {
          const double ex = zh(rows[i]) - z(rows[i]);
          const double ey = zh(rows[n_img + i]) - z(rows[n_img + i]);
          ssx += ex * ex;
          ssy += ey * ey;
          mx = std::max(mx, std::abs(ex));
          my = std::max(my, std::abs(ey));
        }
        ss = ssx + ssy;
        rec.model_regime.push_back(model_based ? ps[s].model->regime() : -1);
        rec.rms.push_back(n_img ? std::sqrt(ss / (2.0 * n_img)) : 0.0);
        if (exposing) {
          acc[s].ssx += ssx;
          acc[s].ssy += ssy;
          acc[s].mx = std::max(acc[s].mx, mx);
          acc[s].my = std::max(acc[s].my, my);
          acc[s].count += 1;
        }
        if (opt.store_fields) {
          Vec zi(rows.size());
          for (size_t i = 0; i < rows.size(); ++i) zi(i) = zh(rows[i]);
          tr.zhat.back().push_back(zi);
        }
      }
      tr.steps.push_back(std::move(rec));
    }
  };

  const int n_exp = steps_for(lotplan.wafer_expose_time, opt.dt);
  const int n_idle = steps_for(lotplan.wafer_swap_time + lotplan.edge_mark_time, opt.dt);
  const int n_lot = steps_for(lotplan.lot_swap_time, opt.dt);

  for (int lot = 0; lot < lotplan.n_lots; ++lot) {
    emit(EventKind::clamp);
    if (lot > 0 && pellicle_at_reclamp) emit(EventKind::pellicle_on);
    emit(EventKind::lot_start);
    for (int w = 0; w < lotplan.wafers_per_lot; ++w) {
      sync_regimes();
      WaferRecord wr;
      wr.lot = lot + 1;
      wr.wafer = w + 1;
      wr.t_align = t;
      wr.temp_align = x.mean();

      const Vec y_all = plant_outputs(plant, x, meas_all.layout, opt.noise_std, rng).y;
      Vec y_fb(2 * fb_idx.size());
      for (size_t i = 0; i < fb_idx.size(); ++i) {
        y_fb(i) = y_all(fb_idx[i]);
        y_fb(fb_idx.size() + i) = y_all(m_all + fb_idx[i]);
      }
      tr.history.push({t, EventKind::measurement, 0, y_all});
      for (int s = 0; s < ns; ++s) {
        if (strategies[s] == Strategy::status_quo) {
          sq = status_quo_field(plant, meas_all.layout, y_all);
        } else if (opt.feedback) {
          ps[s] = predictor_correct(ps[s], y_fb, meas_fb, opt.dt, opt.lambda);
        }
      }

      for (auto& a : acc) a = WaferAccum{};
      emit(EventKind::exposure_on);
      advance(1.0, n_exp, true);
      emit(EventKind::exposure_off);
      wr.temp_exposed = x.mean();
      for (int s = 0; s < ns; ++s) {
        const auto& a = acc[s];
        const double cnt = static_cast<double>(a.count) * n_img;
        const double rx = cnt > 0 ? std::sqrt(a.ssx / cnt) : 0.0;
        const double ry = cnt > 0 ? std::sqrt(a.ssy / cnt) : 0.0;
        const double rxy = cnt > 0 ? std::sqrt((a.ssx + a.ssy) / (2.0 * cnt)) : 0.0;
        wr.err.push_back({a.mx, rx, a.my, ry, std::max(a.mx, a.my), rxy});
      }
      advance(0.0, n_idle, false);
      wr.temp_swapped = x.mean();
      tr.wafers.push_back(std::move(wr));
    }
    emit(EventKind::lot_end);
    if (lot + 1 < lotplan.n_lots) {
      emit(EventKind::unclamp);
      advance(0.0, n_lot, false);
    }
  }
  return tr;
}

// ============================================================================
// Metrics
// ============================================================================

double MetricsTable::rms(int lot, int wafer, Strategy s, const std::string& axis) const {
  for (const auto& r : rows)
    if (r.lot == lot && r.wafer == wafer && r.strategy == s && r.axis == axis) return r.rms_nm;
  throw ValidationError("metrics: no row for lot " + std::to_string(lot) + " wafer " + std::to_string(wafer));
}

MetricsTable compare_strategies(const ScenarioTrace& trace) {
  if (trace.strategies.size() < 2) throw ValidationError("compare_strategies: need at least two strategies");
  MetricsTable mt;
  const int ref = trace.index_of(Strategy::status_quo) >= 0 ? trace.index_of(Strategy::status_quo) : 0;
  mt.reference = trace.strategies[ref];
  const auto ns = trace.strategies.size();
  mt.ratio_vs_reference.assign(ns, {});
  for (const auto& w : trace.wafers) {
    for (size_t s = 0; s < ns; ++s) {
      const auto& e = w.err[s];
      mt.rows.push_back({w.lot, w.wafer, trace.strategies[s], "x", e[0], e[1]});
      mt.rows.push_back({w.lot, w.wafer, trace.strategies[s], "y", e[2], e[3]});
      mt.rows.push_back({w.lot, w.wafer, trace.strategies[s], "xy", e[4], e[5]});
      const double num = e[5], den = w.err[ref][5];
      mt.ratio_vs_reference[s].push_back(num == den ? 1.0 : (den > 0.0 ? num / den : std::numeric_limits<double>::infinity()));
    }
  }
  std::map<int, std::vector<const WaferRecord*>> by_lot;
  for (const auto& w : trace.wafers) by_lot[w.lot].push_back(&w);
  for (const auto& [lot, ws] : by_lot)
    for (size_t s = 0; s < ns; ++s) {
      LotBreakout b;
      b.lot = lot;
      b.strategy = trace.strategies[s];
      double f = 0.0, r = 0.0;
      int nf = 0, nr = 0;
      for (const auto* w : ws) {
        if (w->wafer <= 2) f += w->err[s][5], ++nf;
        else r += w->err[s][5], ++nr;
      }
      b.first_wafers_rms = nf ? f / nf : 0.0;
      b.rest_rms = nr ? r / nr : 0.0;
      mt.breakouts.push_back(b);
    }
  return mt;
}

std::vector<ThroughputFigures> throughput_report(const LotPlan& lp, bool skip_edge_marks) {
  lp.validate();
  const double base = lp.wafer_expose_time + lp.wafer_swap_time;
  const double with_edge = base + lp.edge_mark_time;
  if (!(base > 0.0)) throw ValidationError("throughput: cycle time must be > 0");
  const double lot_share = lp.lot_swap_time / lp.wafers_per_lot;
  const double cycle = skip_edge_marks ? base : with_edge;
  const double gain = skip_edge_marks ? 3600.0 / base - 3600.0 / with_edge : 0.0;
  const double gain_am =
      skip_edge_marks ? 3600.0 / (base + lot_share) - 3600.0 / (with_edge + lot_share) : 0.0;
  const std::string v = skip_edge_marks ? "skip_edge" : "measure_edge";
  return {{v, cycle, 3600.0 / cycle, gain},
          {v + "_lot_amortized", cycle + lot_share, 3600.0 / (cycle + lot_share), gain_am}};
}

// ============================================================================
// Output
// ============================================================================

void emit_results(const ScenarioTrace& trace, const MetricsTable& metrics,
                  const std::vector<ThroughputFigures>& throughput, const RunMeta& meta,
                  const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

  std::ostringstream pw;
  pw << "lot,wafer,strategy,axis,max_nm,rms_nm\n";
  for (const auto& r : metrics.rows)
    pw << r.lot << ',' << r.wafer << ',' << to_string(r.strategy) << ',' << r.axis << ','
       << format_double(r.max_nm) << ',' << format_double(r.rms_nm) << '\n';

  std::ostringstream tc;
  tc << "t_s,regime,strategy,rms_nm\n";
  for (const auto& st : trace.steps)
    for (size_t s = 0; s < trace.strategies.size(); ++s)
      tc << format_double(st.t) << ',' << st.plant_regime << ',' << to_string(trace.strategies[s]) << ','
         << format_double(st.rms[s]) << '\n';

  std::ostringstream th;
  th << "variant,cycle_s,wph,gain_wph\n";
  for (const auto& f : throughput)
    th << f.variant << ',' << format_double(f.cycle_s) << ',' << format_double(f.wph) << ','
       << format_double(f.gain_wph) << '\n';

  nlohmann::json sum;
  sum["config_hash"] = meta.config_hash;
  sum["seed"] = meta.seed;
  sum["forced"] = meta.forced;
  sum["certificate"] = meta.certificate ? *meta.certificate : nlohmann::json(nullptr);
  std::vector<std::string> names;
  for (auto s : trace.strategies) names.push_back(to_string(s));
  sum["strategies"] = names;
  sum["wafers"] = trace.wafers.size();
  sum["steps"] = trace.steps.size();
  nlohmann::json sw = nlohmann::json::array();
  double max_jump = 0.0;
  for (const auto& s : trace.switches) {
    sw.push_back({{"t_s", s.t}, {"strategy", to_string(s.strategy)}, {"from", s.from}, {"to", s.to}, {"jump_nm", s.jump}});
    max_jump = std::max(max_jump, s.jump);
  }
  sum["switches"] = sw;
  sum["max_handoff_jump_nm"] = max_jump;
  nlohmann::json br = nlohmann::json::array();
  for (const auto& b : metrics.breakouts)
    br.push_back({{"lot", b.lot},
                  {"strategy", to_string(b.strategy)},
                  {"first_wafers_rms_nm", b.first_wafers_rms},
                  {"rest_rms_nm", b.rest_rms}});
  sum["lot_breakouts"] = br;
  sum["reference_strategy"] = to_string(metrics.reference);

  write_file_atomic(out_dir / "per_wafer.csv", pw.str());
  write_file_atomic(out_dir / "trace.csv", tc.str());
  write_file_atomic(out_dir / "throughput.csv", th.str());
  write_file_atomic(out_dir / "summary.json", sum.dump(2) + "\n");
}

std::vector<WaferMetric> read_per_wafer_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "lot,wafer,strategy,axis,max_nm,rms_nm")
    throw ValidationError(path.string() + ": unexpected per_wafer header");
  auto num = [&](const std::string& s) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ValidationError(path.string() + ": bad number '" + s + "'");
    return v;
  };
  std::vector<WaferMetric> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw ValidationError(path.string() + ": expected 6 fields in '" + line + "'");
    out.push_back({static_cast<int>(num(f[0])), static_cast<int>(num(f[1])), strategy_from_string(f[2]), f[3],
                   num(f[4]), num(f[5])});
  }
  return out;
}

}  // namespace rh
