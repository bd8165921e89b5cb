#pragma once

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cfsim/dynsim.hpp"

namespace cfsim {

// Complex frequency eta = rho + j*omega of a rotating complex signal:
// rho is the normalized magnitude rate (1/s), omega the phase rate (rad/s).
// Series values are NaN where the quantity is undefined (magnitude floor,
// discontinuities, finite-difference stencil ends).
enum class DerivativeMode { Analytic, CentralDifference };

struct MetricOptions {
  DerivativeMode mode = DerivativeMode::Analytic;
  double injection_floor = 1e-9;   // pu, weight cutoff for |s_h|
  double magnitude_floor = 1e-6;   // pu, eta undefined below this
  double residual_floor = 1e-6;    // normalization floor for identity residuals
};

inline bool is_defined(Complex v) {
  return std::isfinite(v.real()) && std::isfinite(v.imag());
}
inline Complex undefined_value() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {nan, nan};
}

/// Complex frequency of a uniformly sampled complex signal. In
/// central-difference mode rho comes from differences of ln|x| and omega from
/// differences of the unwrapped angle (second-order one-sided stencils at the
/// ends). In analytic mode eta = xdot/x with caller-supplied derivatives.
std::vector<Complex> complex_frequency_of_signal(
    const std::vector<Complex>& x, double dt, DerivativeMode mode,
    const std::vector<Complex>* xdot = nullptr, double magnitude_floor = 1e-6);

/// Unwraps a sampled angle sequence in place (jump threshold pi).
std::vector<double> unwrap_angles(const std::vector<double>& theta);

struct LossSeries {
  std::vector<Complex> s_l;
  std::vector<double> magnitude;
};

/// Total complex power losses s_l(t) = sum over buses of v*conj(i).
LossSeries loss_series(const Trajectory& traj);

/// Complex frequency of the system losses.
std::vector<Complex> loss_cf(const Trajectory& traj, const MetricOptions& opt);

/// Injection-weighted system complex frequency of bus voltages.
std::vector<Complex> weighted_voltage_component(const Trajectory& traj,
                                                const MetricOptions& opt);

/// Injection-weighted system complex frequency of net bus currents, with the
/// conjugation convention that makes eta_sl = eta_v_sys + conj(eta_i_sys).
std::vector<Complex> weighted_current_component(const Trajectory& traj,
                                                const MetricOptions& opt);

struct DecompositionSeries {
  std::vector<double> t;
  std::vector<Complex> eta_sl;
  std::vector<Complex> eta_v_sys;
  std::vector<Complex> eta_i_sys;
  std::vector<double> omega_coi;       // pu; NaN when no inertial devices
  std::vector<double> loss_magnitude;  // |s_l|, pu
  std::vector<double> decomp_residual;   // relative, NaN at undefined points
  double omega_base = 0.0;
};

DecompositionSeries decompose(const Trajectory& traj, const MetricOptions& opt);

struct IdentityReport {
  std::vector<double> t;
  std::vector<int> bus_ids;                  // included buses
  std::vector<std::vector<double>> rate;      // [time][included bus]
  std::vector<std::vector<double>> coupling;
  std::vector<int> excluded_buses;           // below injection floor throughout
  double max_rate = 0.0, max_coupling = 0.0;
  double argmax_rate_t = 0.0, argmax_coupling_t = 0.0;
  int argmax_rate_bus = 0, argmax_coupling_bus = 0;
};

/// Per-bus, per-time relative residuals of the complex-power derivative
/// identity and of the weighted-current identity.
IdentityReport per_bus_identities(const Trajectory& traj, const MetricOptions& opt);

/// Inertia-weighted mean of the internal speeds of inertial devices, pu.
/// Empty when no device carries inertia.
std::vector<double> coi_frequency(const Trajectory& traj);
std::vector<double> coi_frequency(const Trajectory& traj,
                                  const std::vector<GfmVsm>& devices);

/// Least-squares slope of a series over a centered window at
/// t_event + offset. Throws if the window leaves the series.
double rocof_at(const std::vector<double>& t, const std::vector<double>& series,
                double t_event, double offset = 0.5, double window = 0.1);

/// Metrics CSV: omega columns in pu of the system base frequency by default.
void export_metrics_csv(const DecompositionSeries& series, std::ostream& os,
                        bool omega_in_pu = true);
void export_identities_csv(const IdentityReport& report, std::ostream& os);

}  // namespace cfsim
