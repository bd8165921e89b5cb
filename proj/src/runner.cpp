#include "cfsim/runner.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace cfsim {

std::vector<BusSpec> bus_specs(const CaseScenario& sc) {
  const Network& net = sc.network;
  std::vector<BusSpec> spec(net.size());
  for (const LoadModel& l : sc.loads) {
    BusSpec& s = spec[net.bus_index(l.bus)];
    s.p_set -= l.p0;
    s.q_set -= l.q0;
  }
  auto mark_device = [&](int bus, double p_set, double v_set) {
    BusSpec& s = spec[net.bus_index(bus)];
    if (bus == sc.power_flow.slack_bus) {
      s.kind = BusKind::Slack;
    } else {
      s.kind = BusKind::PV;
      s.p_set += p_set;
    }
    s.v_set = v_set;
  };
  for (const GfmCase& g : sc.gfm) mark_device(g.dev.bus, g.p_set, g.v_set);
  for (const GflCase& g : sc.gfl) mark_device(g.dev.bus, g.p_set, g.v_set);
  return spec;
}

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

double max_defined(const std::vector<double>& v, size_t from = 0) {
  double m = 0.0;
  for (size_t i = from; i < v.size(); ++i) {
    if (std::isfinite(v[i])) m = std::max(m, std::abs(v[i]));
  }
  return m;
}

double safe_rocof(const std::vector<double>& t, const std::vector<double>& series,
                  double t_event, double offset, double window) {
  try {
    return rocof_at(t, series, t_event, offset, window);
  } catch (const std::exception&) {
    return kNaN;
  }
}

void emit_csv_value(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace

RunBundle run_scenario(const CaseScenario& scenario) {
  RunBundle bundle;
  bundle.effective = scenario;
  if (scenario.rx_ratio) {
    bundle.effective.network = set_rx_ratio(scenario.network, *scenario.rx_ratio,
                                            scenario.rx_includes_transformers);
  }
  const CaseScenario& sc = bundle.effective;

  const std::vector<Violation> violations = validate_scenario(sc);
  if (!violations.empty()) {
    std::ostringstream os;
    os << "scenario validation failed:";
    for (const Violation& v : violations) os << "\n  " << v.entity << ": " << v.rule;
    throw ValidationError(os.str());
  }

  // Power-flow initialization; solved tighter than the reporting tolerance
  // so device equilibria satisfy the assembly residual contract.
  AdmittanceMatrix Y;
  try {
    Y = build_admittance(sc.network);
    bundle.pf = solve_power_flow(sc.network, Y, bus_specs(sc),
                                 std::min(sc.power_flow.tolerance, 1e-11),
                                 sc.power_flow.max_iterations);
  } catch (const std::exception& e) {
    throw NumericalError(std::string("power_flow: ") + e.what());
  }
  if (!bundle.pf.converged) {
    throw NumericalError("power_flow: no convergence in " +
                         std::to_string(bundle.pf.iterations) +
                         " iterations, mismatch " +
                         std::to_string(bundle.pf.mismatch_norm));
  }
  bundle.summary.pf_mismatch = bundle.pf.mismatch_norm;
  bundle.summary.pf_iterations = bundle.pf.iterations;

  SimulationInput input;
  input.network = sc.network;
  for (const GfmCase& g : sc.gfm) input.gfm.push_back(g.dev);
  for (const GflCase& g : sc.gfl) input.gfl.push_back(g.dev);
  input.loads = sc.loads;
  input.events = sc.events;
  input.config = sc.integrator;
  try {
    bundle.trajectory = run_simulation(input, bundle.pf);
  } catch (const std::exception& e) {
    throw NumericalError(std::string("simulation: ") + e.what());
  }

  const MetricOptions opt = sc.metrics.options();
  bundle.series = decompose(bundle.trajectory, opt);
  bundle.identities = per_bus_identities(bundle.trajectory, opt);

  RunSummary& s = bundle.summary;
  s.ok = true;
  const double wb = bundle.trajectory.omega_base;
  const int m = bundle.trajectory.num_steps();
  std::vector<double> omega_vsys(m, kNaN), omega_isys(m, kNaN), eta_sl_mag(m, kNaN);
  for (int i = 0; i < m; ++i) {
    if (is_defined(bundle.series.eta_v_sys[i])) {
      omega_vsys[i] = bundle.series.eta_v_sys[i].imag() / wb;
    }
    if (is_defined(bundle.series.eta_i_sys[i])) {
      omega_isys[i] = bundle.series.eta_i_sys[i].imag() / wb;
    }
    if (is_defined(bundle.series.eta_sl[i])) {
      eta_sl_mag[i] = std::abs(bundle.series.eta_sl[i]);
    }
  }

  double t_event = kNaN;
  for (const Event& e : sc.events) {
    if (!std::isfinite(t_event) || e.time < t_event) t_event = e.time;
  }
  if (std::isfinite(t_event)) {
    s.rocof_omega_coi = safe_rocof(bundle.series.t, bundle.series.omega_coi,
                                   t_event, sc.metrics.rocof_offset,
                                   sc.metrics.rocof_window);
    s.rocof_omega_vsys = safe_rocof(bundle.series.t, omega_vsys, t_event,
                                    sc.metrics.rocof_offset, sc.metrics.rocof_window);
    s.rocof_omega_isys = safe_rocof(bundle.series.t, omega_isys, t_event,
                                    sc.metrics.rocof_offset, sc.metrics.rocof_window);
  } else {
    s.rocof_omega_coi = s.rocof_omega_vsys = s.rocof_omega_isys = kNaN;
  }
  s.steady_loss_mag = bundle.series.loss_magnitude.back();
  s.peak_omega_vsys = max_defined(omega_vsys);
  s.peak_omega_isys = max_defined(omega_isys);
  s.decomp_max_residual = max_defined(bundle.series.decomp_residual);
  s.rate_max_residual = bundle.identities.max_rate;
  s.coupling_max_residual = bundle.identities.max_coupling;
  s.post_settle_eta_sl = max_defined(eta_sl_mag, m - std::max(1, m / 20));

  s.settling_time = kNaN;
  const double t_after = std::isfinite(t_event) ? t_event : 0.0;
  for (int i = m - 1; i >= 0; --i) {
    if (bundle.series.t[i] < t_after) break;
    if (std::isfinite(eta_sl_mag[i]) && eta_sl_mag[i] >= 1e-4) {
      if (i + 1 < m) s.settling_time = bundle.series.t[i + 1];
      break;
    }
    if (i == 0) s.settling_time = bundle.series.t[0];
  }
  return bundle;
}

void export_plot_data(const RunBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const DecompositionSeries& ds = bundle.series;
  const double wscale =
      bundle.effective.metrics.omega_in_pu ? 1.0 / ds.omega_base : 1.0;

  auto open = [&](const char* name, const char* header) {
    std::ofstream os(dir / name);
    os << header << "\n";
    return os;
  };
  auto row = [&](std::ofstream& os, double t, double a, double b) {
    emit_csv_value(os, t);
    os << ",";
    emit_csv_value(os, a);
    os << ",";
    emit_csv_value(os, b);
    os << "\n";
  };

  std::ofstream ae = open("panel_ae.csv", "t,s_l_mag,omega_coi");
  std::ofstream bf = open("panel_bf.csv", "t,rho_vsys,omega_vsys");
  std::ofstream cg = open("panel_cg.csv", "t,rho_isys,omega_isys");
  std::ofstream dh = open("panel_dh.csv", "t,rho_sl,omega_sl");
  for (size_t i = 0; i < ds.t.size(); ++i) {
    row(ae, ds.t[i], ds.loss_magnitude[i], ds.omega_coi[i]);
    row(bf, ds.t[i], ds.eta_v_sys[i].real(), ds.eta_v_sys[i].imag() * wscale);
    row(cg, ds.t[i], ds.eta_i_sys[i].real(), ds.eta_i_sys[i].imag() * wscale);
    row(dh, ds.t[i], ds.eta_sl[i].real(), ds.eta_sl[i].imag() * wscale);
  }
}

namespace {

nlohmann::json summary_json(const RunSummary& s) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return nlohmann::json{{"ok", s.ok},
                        {"error", s.error},
                        {"stage", s.stage},
                        {"pf_mismatch", num(s.pf_mismatch)},
                        {"pf_iterations", s.pf_iterations},
                        {"rocof_omega_coi", num(s.rocof_omega_coi)},
                        {"rocof_omega_vsys", num(s.rocof_omega_vsys)},
                        {"rocof_omega_isys", num(s.rocof_omega_isys)},
                        {"steady_loss_mag", num(s.steady_loss_mag)},
                        {"peak_omega_vsys", num(s.peak_omega_vsys)},
                        {"peak_omega_isys", num(s.peak_omega_isys)},
                        {"decomp_max_residual", num(s.decomp_max_residual)},
                        {"rate_max_residual", num(s.rate_max_residual)},
                        {"coupling_max_residual", num(s.coupling_max_residual)},
                        {"post_settle_eta_sl", num(s.post_settle_eta_sl)},
                        {"settling_time", num(s.settling_time)}};
}

}  // namespace

void write_run_bundle(const RunBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_case(bundle.effective, dir / "effective_case.json");
  {
    std::ofstream os(dir / "trajectory.csv");
    export_trajectory_csv(bundle.trajectory, os);
  }
  {
    std::ofstream os(dir / "metrics.csv");
    export_metrics_csv(bundle.series, os, bundle.effective.metrics.omega_in_pu);
  }
  {
    std::ofstream os(dir / "identities.csv");
    export_identities_csv(bundle.identities, os);
  }
  {
    std::ofstream os(dir / "events.csv");
    os << "step,t,label\n";
    for (const auto& [step, label] : bundle.trajectory.event_markers) {
      os << step << ",";
      emit_csv_value(os, bundle.trajectory.t[step]);
      os << "," << label << "\n";
    }
  }
  {
    std::ofstream os(dir / "summary.json");
    os << summary_json(bundle.summary).dump(2) << "\n";
  }
  export_plot_data(bundle, dir);
}

std::vector<SweepRow> run_sweep(const CaseScenario& base,
                                const std::vector<double>& rx_values,
                                const std::filesystem::path& out_dir,
                                bool write_outputs) {
  if (rx_values.empty()) {
    throw ValidationError("sweep: empty R/X value list");
  }
  auto run_one = [&](double rx) {
    SweepRow row;
    row.rx_ratio = rx;
    try {
      CaseScenario sc = base;
      sc.rx_ratio = rx;
      RunBundle bundle = run_scenario(sc);
      row.summary = bundle.summary;
      row.ok = true;
      if (write_outputs) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "rx_%g", rx);
        write_run_bundle(bundle, out_dir / buf);
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    return row;
  };

  std::vector<std::future<SweepRow>> futures;
  futures.reserve(rx_values.size());
  for (double rx : rx_values) {
    futures.push_back(std::async(std::launch::async, run_one, rx));
  }
  std::vector<SweepRow> rows;
  rows.reserve(rx_values.size());
  for (auto& f : futures) rows.push_back(f.get());

  if (write_outputs) {
    std::filesystem::create_directories(out_dir);
    write_sweep_table(rows, out_dir / "comparison.csv");
  }
  return rows;
}

void write_sweep_table(const std::vector<SweepRow>& rows,
                       const std::filesystem::path& path) {
  std::ofstream os(path);
  os << "rx_ratio,status,rocof_omega_coi,rocof_omega_vsys,rocof_omega_isys,"
        "steady_loss_mag,peak_omega_vsys,peak_omega_isys\n";
  for (const SweepRow& r : rows) {
    emit_csv_value(os, r.rx_ratio);
    os << "," << (r.ok ? "ok" : ("failed: " + r.error));
    for (double v : {r.summary.rocof_omega_coi, r.summary.rocof_omega_vsys,
                     r.summary.rocof_omega_isys, r.summary.steady_loss_mag,
                     r.summary.peak_omega_vsys, r.summary.peak_omega_isys}) {
      os << ",";
      emit_csv_value(os, v);
    }
    os << "\n";
  }
}

Trajectory load_trajectory_csv(const std::filesystem::path& path,
                               double base_frequency_hz) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trajectory file " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw ValidationError("empty trajectory file");

  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  if (cols.empty() || cols[0] != "t") {
    throw ValidationError("trajectory csv: first column must be t");
  }
  std::vector<int> bus_ids;
  for (const std::string& c : cols) {
    if (c.rfind("v_", 0) == 0) bus_ids.push_back(std::stoi(c.substr(2)));
  }
  const int n = static_cast<int>(bus_ids.size());
  const int expected_bus_cols = 6 * n;
  const int state_start = 1 + expected_bus_cols;
  std::vector<std::string> state_names(cols.begin() + state_start, cols.end());

  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    if (row.size() != cols.size()) {
      throw ValidationError("trajectory csv: ragged row");
    }
    rows.push_back(std::move(row));
  }

  Trajectory traj;
  traj.bus_ids = bus_ids;
  traj.state_names = state_names;
  traj.omega_base = 2.0 * 3.14159265358979323846 * base_frequency_hz;
  traj.has_analytic = false;
  const int m = static_cast<int>(rows.size());
  traj.t.resize(m);
  traj.V.resize(m, n);
  traj.I.resize(m, n);
  traj.states.resize(m, static_cast<int>(state_names.size()));
  for (int i = 0; i < m; ++i) {
    traj.t[i] = rows[i][0];
    for (int b = 0; b < n; ++b) {
      const double vm = rows[i][1 + b];
      const double th = rows[i][1 + n + b];
      traj.V(i, b) = std::polar(vm, th);
      traj.I(i, b) = Complex{rows[i][1 + 4 * n + b], rows[i][1 + 5 * n + b]};
    }
    for (size_t j = 0; j < state_names.size(); ++j) {
      traj.states(i, static_cast<int>(j)) = rows[i][state_start + j];
    }
  }
  return traj;
}

}  // namespace cfsim
