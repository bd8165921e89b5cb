#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfsim/cfmetrics.hpp"
#include "cfsim/devices.hpp"
#include "cfsim/dynsim.hpp"
#include "cfsim/netmodel.hpp"

namespace cfsim {

// Case-file or scenario-consistency failure (CLI exit code 1).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Solver failure: power flow, Newton step, singular system (exit code 2).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PowerFlowConfig {
  int slack_bus = 0;
  double tolerance = 1e-8;
  int max_iterations = 100;
};

struct MetricsConfig {
  DerivativeMode mode = DerivativeMode::Analytic;
  double injection_floor = 1e-9;
  double magnitude_floor = 1e-6;
  double rocof_offset = 0.5;   // s after the disturbance
  double rocof_window = 0.1;   // s
  bool omega_in_pu = true;

  MetricOptions options() const {
    return {mode, injection_floor, magnitude_floor, 1e-6};
  }
};

// Converter entry: device parameters plus its power-flow dispatch.
struct GfmCase {
  GfmVsm dev;
  double p_set = 0.0;  // pu generation dispatch
  double v_set = 1.0;  // pu terminal setpoint
};
struct GflCase {
  GflConverter dev;
  double p_set = 0.0;
  double v_set = 1.0;
};

struct CaseScenario {
  std::string label = "case";
  Network network;
  PowerFlowConfig power_flow;
  std::vector<GfmCase> gfm;
  std::vector<GflCase> gfl;
  std::vector<LoadModel> loads;
  std::vector<Event> events;
  IntegratorConfig integrator;
  MetricsConfig metrics;
  std::optional<double> rx_ratio;
  bool rx_includes_transformers = true;
  std::map<std::string, std::string> labels;
};

/// Scenario-level checks on top of network validation: device buses exist
/// and are unique, event targets resolve, the slack bus hosts a device.
std::vector<Violation> validate_scenario(const CaseScenario& scenario);

/// Parses and fully validates a case file; unknown keys anywhere are errors.
CaseScenario load_case(const std::filesystem::path& path);
CaseScenario parse_case(const std::string& text);

/// Canonical serialization: sorted keys, stable float formatting.
std::string serialize_case(const CaseScenario& scenario);
void save_case(const CaseScenario& scenario, const std::filesystem::path& path);

}  // namespace cfsim
