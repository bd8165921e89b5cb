#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cfsim/case_io.hpp"
#include "cfsim/ieee39.hpp"
#include "cfsim/runner.hpp"

namespace fs = std::filesystem;
using namespace cfsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIdentity = 3;

std::vector<double> parse_ratio_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

void apply_mode(CaseScenario& sc, const std::string& mode) {
  if (mode.empty()) return;
  if (mode == "analytic") sc.metrics.mode = DerivativeMode::Analytic;
  else if (mode == "diff") sc.metrics.mode = DerivativeMode::CentralDifference;
  else throw ValidationError("--mode: expected 'analytic' or 'diff'");
}

void print_summary(const RunSummary& s) {
  std::cout << "  power flow: mismatch " << s.pf_mismatch << " in "
            << s.pf_iterations << " iterations\n"
            << "  RoCoF omega_coi  " << s.rocof_omega_coi << " pu/s\n"
            << "  RoCoF omega_vsys " << s.rocof_omega_vsys << " pu/s\n"
            << "  RoCoF omega_isys " << s.rocof_omega_isys << " pu/s\n"
            << "  steady |s_l| " << s.steady_loss_mag << " pu\n"
            << "  residual maxima: decomp " << s.decomp_max_residual << ", rate "
            << s.rate_max_residual << ", coupling " << s.coupling_max_residual << "\n"
            << "  settling time " << s.settling_time << " s, post-settle |eta_sl| "
            << s.post_settle_eta_sl << " 1/s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phasor-domain power-network simulator and complex-frequency "
               "loss-metric engine"};
  app.require_subcommand(1);

  std::string case_path, out_dir = "out", mode, rx_list, traj_path, case_out;
  double rx = -1.0, verify_tol = 1e-3;

  CLI::App* sim = app.add_subcommand("simulate", "Run one scenario end to end");
  sim->add_option("--case", case_path, "Case file (JSON)")->required();
  sim->add_option("--rx", rx, "Override the R/X ratio");
  sim->add_option("--out", out_dir, "Output directory");
  sim->add_option("--mode", mode, "Derivative mode: analytic|diff");

  CLI::App* sweep = app.add_subcommand("sweep", "R/X sensitivity sweep");
  sweep->add_option("--case", case_path, "Case file (JSON)")->required();
  sweep->add_option("--rx", rx_list, "Comma-separated R/X values")->required();
  sweep->add_option("--out", out_dir, "Output directory");
  sweep->add_option("--mode", mode, "Derivative mode: analytic|diff");

  CLI::App* verify = app.add_subcommand("verify", "Run the identity suite");
  verify->add_option("--case", case_path, "Case file (JSON)")->required();
  verify->add_option("--tol", verify_tol, "Relative residual tolerance");
  verify->add_option("--mode", mode, "Derivative mode: analytic|diff");

  CLI::App* case39 = app.add_subcommand("case39", "Emit the built-in 39-bus case");
  case39->add_option("--out", case_out, "Output case file")->required();

  CLI::App* metrics = app.add_subcommand("metrics",
                                         "Post-process an exported trajectory");
  metrics->add_option("--traj", traj_path, "Trajectory CSV")->required();
  metrics->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      CaseScenario sc = load_case(case_path);
      if (rx > 0.0) sc.rx_ratio = rx;
      apply_mode(sc, mode);
      RunBundle bundle = run_scenario(sc);
      fs::path dir = fs::path(out_dir) / bundle.effective.label;
      if (bundle.effective.rx_ratio) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "rx_%g", *bundle.effective.rx_ratio);
        dir /= buf;
      }
      write_run_bundle(bundle, dir);
      std::cout << "run complete: " << dir.string() << "\n";
      print_summary(bundle.summary);
      return kExitOk;
    }
    if (sweep->parsed()) {
      CaseScenario sc = load_case(case_path);
      apply_mode(sc, mode);
      const std::vector<double> values = parse_ratio_list(rx_list);
      fs::path dir = fs::path(out_dir) / sc.label;
      const std::vector<SweepRow> rows = run_sweep(sc, values, dir);
      std::cout << "sweep complete: " << (dir / "comparison.csv").string() << "\n";
      bool any_failed = false;
      for (const SweepRow& r : rows) {
        std::cout << "  rx " << r.rx_ratio << ": "
                  << (r.ok ? "ok" : r.error) << "\n";
        any_failed = any_failed || !r.ok;
      }
      return any_failed ? kExitNumerical : kExitOk;
    }
    if (verify->parsed()) {
      CaseScenario sc = load_case(case_path);
      apply_mode(sc, mode);
      RunBundle bundle = run_scenario(sc);
      const RunSummary& s = bundle.summary;
      std::cout << "identity residual maxima (mode "
                << (sc.metrics.mode == DerivativeMode::Analytic ? "analytic" : "diff")
                << "): decomp " << s.decomp_max_residual << ", rate "
                << s.rate_max_residual << ", coupling " << s.coupling_max_residual
                << " (tolerance " << verify_tol << ")\n";
      const bool breach = s.decomp_max_residual > verify_tol ||
                          s.rate_max_residual > verify_tol ||
                          s.coupling_max_residual > verify_tol;
      return breach ? kExitIdentity : kExitOk;
    }
    if (case39->parsed()) {
      save_case(build_ieee39_ibr(), case_out);
      std::cout << "wrote " << case_out << "\n";
      return kExitOk;
    }
    if (metrics->parsed()) {
      Trajectory traj = load_trajectory_csv(traj_path);
      MetricOptions opt;
      opt.mode = DerivativeMode::CentralDifference;
      DecompositionSeries ds = decompose(traj, opt);
      fs::create_directories(out_dir);
      std::ofstream os(fs::path(out_dir) / "metrics.csv");
      export_metrics_csv(ds, os);
      std::cout << "wrote " << (fs::path(out_dir) / "metrics.csv").string() << "\n";
      return kExitOk;
    }
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
