#include "cfsim/devices.hpp"

#include <cmath>
#include <stdexcept>

namespace cfsim {

GfmDerivatives gfm_derivatives(const GfmVsm& dev, const GfmVsm::State& st,
                               Complex v_bus, double omega_base) {
  const Complex emf = std::polar(st.emf, st.delta);
  const Complex i = (emf - v_bus) / dev.coupling_z();
  const Complex s = v_bus * std::conj(i);
  const double p_e = s.real();
  const double q_e = s.imag();

  GfmDerivatives d;
  d.d_delta = omega_base * (st.omega - 1.0);
  d.d_omega = (dev.p_ref + dev.freq_droop_gain * (1.0 - st.omega) - p_e -
               dev.damping_d * (st.omega - 1.0)) /
              (2.0 * dev.inertia_h);
  d.d_emf = (dev.v_ref - std::abs(v_bus) -
             dev.volt_droop_gain * (q_e - dev.q_ref)) /
            dev.avr_time_const;
  return d;
}

GflDerivatives gfl_derivatives(const GflConverter& dev, const GflConverter::State& st,
                               Complex v_bus, double omega_base) {
  GflDerivatives d;
  // Smooth angle error: arg of the bus voltage rotated into the PLL frame.
  const double eps = std::arg(v_bus * std::polar(1.0, -st.theta_pll));
  const double omega_pll = 1.0 + dev.pll_kp * eps + st.x_pll;
  d.d_theta_pll = omega_base * (omega_pll - 1.0);
  d.d_x_pll = dev.pll_ki * eps;

  const double vm = std::abs(v_bus);
  if (vm < GflConverter::kLowVoltageFloor) {
    d.low_voltage_guard = true;  // commands frozen
    return d;
  }
  const double id_cmd = (dev.p_ref + dev.freq_droop_gain * (1.0 - omega_pll)) / vm;
  const double iq_cmd = -(dev.q_ref + dev.volt_droop_gain * (dev.v_ref - vm)) / vm;
  d.d_id = (id_cmd - st.id) / dev.current_lag_t;
  d.d_iq = (iq_cmd - st.iq) / dev.current_lag_t;
  return d;
}

Complex injected_current(const GfmVsm& dev, const GfmVsm::State& st, Complex v_bus) {
  return (std::polar(st.emf, st.delta) - v_bus) / dev.coupling_z();
}

Complex injected_current(const GflConverter& /*dev*/, const GflConverter::State& st,
                         Complex /*v_bus*/) {
  return Complex{st.id, st.iq} * std::polar(1.0, st.theta_pll);
}

Complex current_voltage_sensitivity(const GfmVsm& dev) {
  return -1.0 / dev.coupling_z();
}

GfmVsm::State init_gfm(GfmVsm& dev, Complex v_bus, Complex s_inj) {
  const Complex i = std::conj(s_inj / v_bus);
  const Complex emf = v_bus + dev.coupling_z() * i;
  GfmVsm::State st;
  st.delta = std::arg(emf);
  st.omega = 1.0;
  st.emf = std::abs(emf);
  dev.p_ref = s_inj.real();
  dev.q_ref = s_inj.imag();
  dev.v_ref = std::abs(v_bus);
  return st;
}

GflConverter::State init_gfl(GflConverter& dev, Complex v_bus, Complex s_inj) {
  const double vm = std::abs(v_bus);
  if (vm < GflConverter::kLowVoltageFloor) {
    throw std::runtime_error("init_gfl: bus voltage below low-voltage guard");
  }
  GflConverter::State st;
  st.theta_pll = std::arg(v_bus);
  st.x_pll = 0.0;
  const Complex i_dq = std::conj(s_inj / v_bus) * std::polar(1.0, -st.theta_pll);
  st.id = i_dq.real();
  st.iq = i_dq.imag();
  dev.p_ref = s_inj.real();
  dev.q_ref = s_inj.imag();
  dev.v_ref = vm;
  return st;
}

}  // namespace cfsim
