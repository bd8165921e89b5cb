#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "cfsim/netmodel.hpp"

namespace cfsim {

// Grid-forming virtual-synchronous-machine converter: swing equation plus a
// first-order internal voltage source behind a coupling impedance.
struct GfmVsm {
  std::string name;
  int bus = 0;
  double inertia_h = 3.0;        // s
  double damping_d = 1.0;        // pu torque per pu speed deviation
  double p_ref = 0.0;            // pu
  double q_ref = 0.0;            // pu
  double v_ref = 1.0;            // pu
  double freq_droop_gain = 20.0; // pu power per pu frequency deviation
  double volt_droop_gain = 0.1;  // pu voltage per pu reactive deviation
  double coupling_r = 0.0;       // pu
  double coupling_x = 0.15;      // pu
  double avr_time_const = 0.5;   // s

  // States: internal angle (rad), speed (pu), emf magnitude (pu).
  struct State {
    double delta = 0.0;
    double omega = 1.0;
    double emf = 1.0;
  };
  static constexpr int kNumStates = 3;

  Complex coupling_z() const { return {coupling_r, coupling_x}; }
};

// Grid-following converter: PI phase-locked loop plus first-order current
// command tracking with frequency/voltage droop on the references.
struct GflConverter {
  std::string name;
  int bus = 0;
  double p_ref = 0.0;
  double q_ref = 0.0;
  double v_ref = 1.0;
  double freq_droop_gain = 20.0;
  double volt_droop_gain = 10.0;
  double pll_kp = 10.0;
  double pll_ki = 50.0;
  double current_lag_t = 0.02;   // s

  struct State {
    double theta_pll = 0.0;  // rad
    double x_pll = 0.0;      // PLL integrator, pu frequency
    double id = 0.0;         // pu, PLL frame
    double iq = 0.0;
  };
  static constexpr int kNumStates = 4;

  static constexpr double kLowVoltageFloor = 0.01;  // pu guard threshold
};

// Constant-impedance load, folded into the admittance matrix at its
// initialization voltage.
struct LoadModel {
  int bus = 0;
  double p0 = 0.0;   // pu consumed at v_init
  double q0 = 0.0;
  double v_init = 1.0;
  bool connected = true;

  // Shunt admittance reproducing (p0, q0) consumption at v_init.
  Complex shunt_admittance() const {
    return Complex{p0, -q0} / (v_init * v_init);
  }
};

enum class EventKind { LoadOutage, LoadStep, SetpointStep };

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::LoadOutage;
  int bus = 0;               // load events
  std::string device;        // setpoint events
  std::string field;         // "p_ref" | "q_ref" | "v_ref"
  double delta_p = 0.0;      // load-step payload
  double delta_q = 0.0;
  double delta = 0.0;        // setpoint-step payload
};

struct GfmDerivatives {
  double d_delta = 0.0;
  double d_omega = 0.0;
  double d_emf = 0.0;
};

struct GflDerivatives {
  double d_theta_pll = 0.0;
  double d_x_pll = 0.0;
  double d_id = 0.0;
  double d_iq = 0.0;
  bool low_voltage_guard = false;
};

GfmDerivatives gfm_derivatives(const GfmVsm& dev, const GfmVsm::State& st,
                               Complex v_bus, double omega_base);
GflDerivatives gfl_derivatives(const GflConverter& dev, const GflConverter::State& st,
                               Complex v_bus, double omega_base);

Complex injected_current(const GfmVsm& dev, const GfmVsm::State& st, Complex v_bus);
Complex injected_current(const GflConverter& dev, const GflConverter::State& st,
                         Complex v_bus);

// d(injected current)/d(bus voltage), as a holomorphic complex derivative.
// The GFL current does not depend on its bus voltage away from the guard.
Complex current_voltage_sensitivity(const GfmVsm& dev);

/// Equilibrium initialization at a solved operating point: sets the device
/// references so all state derivatives vanish with injection s at voltage v.
GfmVsm::State init_gfm(GfmVsm& dev, Complex v_bus, Complex s_inj);
GflConverter::State init_gfl(GflConverter& dev, Complex v_bus, Complex s_inj);

}  // namespace cfsim
