#pragma once

#include <filesystem>

#include "cfsim/case_io.hpp"

namespace cfsim {

struct RunSummary {
  bool ok = false;
  std::string error;
  std::string stage;                 // where a failure occurred
  double pf_mismatch = 0.0;
  int pf_iterations = 0;
  double rocof_omega_coi = 0.0;      // pu/s, NaN without an event
  double rocof_omega_vsys = 0.0;
  double rocof_omega_isys = 0.0;
  double steady_loss_mag = 0.0;      // |s_l| at t_end, pu
  double peak_omega_vsys = 0.0;      // pu deviation
  double peak_omega_isys = 0.0;
  double decomp_max_residual = 0.0;
  double rate_max_residual = 0.0;
  double coupling_max_residual = 0.0;
  double post_settle_eta_sl = 0.0;   // max |eta_sl| over the last 5% of the run
  double settling_time = 0.0;        // s, NaN if never settled below 1e-4 1/s
};

struct RunBundle {
  CaseScenario effective;  // rx transform applied, defaults materialized
  PowerFlowSolution pf;
  Trajectory trajectory;
  DecompositionSeries series;
  IdentityReport identities;
  RunSummary summary;
};

/// Power-flow bus specs implied by a scenario: loads as negative injections,
/// device buses PV at their setpoints, the configured slack marked Slack.
std::vector<BusSpec> bus_specs(const CaseScenario& scenario);

/// Full pipeline: power flow, assembly, integration, decomposition, identity
/// checks. Throws ValidationError / NumericalError with a stage label.
RunBundle run_scenario(const CaseScenario& scenario);

/// Writes trajectory.csv, metrics.csv, identities.csv, events.csv, the four
/// panel files, effective_case.json, and summary.json under dir.
void write_run_bundle(const RunBundle& bundle, const std::filesystem::path& dir);

/// Panel files only (plot-ready CSV per figure panel pair).
void export_plot_data(const RunBundle& bundle, const std::filesystem::path& dir);

struct SweepRow {
  double rx_ratio = 0.0;
  bool ok = false;
  std::string error;
  RunSummary summary;
};

/// Runs the scenario once per R/X value (concurrently), each into its own
/// subdirectory, and writes a comparison table. A failed value is reported in
/// its row without aborting the others.
std::vector<SweepRow> run_sweep(const CaseScenario& base,
                                const std::vector<double>& rx_values,
                                const std::filesystem::path& out_dir,
                                bool write_outputs = true);

void write_sweep_table(const std::vector<SweepRow>& rows,
                       const std::filesystem::path& path);

/// Rebuilds a Trajectory from an exported trajectory CSV (phasors and device
/// states only; analytic derivatives are not recoverable, so metrics on it
/// run in central-difference mode).
Trajectory load_trajectory_csv(const std::filesystem::path& path,
                               double base_frequency_hz = 60.0);

}  // namespace cfsim
