#include "cfsim/cfmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace cfsim {

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

// Second-order finite differences: central in the interior, one-sided at the
// ends. Requires at least three samples.
template <typename T>
std::vector<T> fd_derivative(const std::vector<T>& x, double dt) {
  const int n = static_cast<int>(x.size());
  std::vector<T> d(n);
  if (n < 3) {
    for (auto& v : d) v = T{kNaN};
    return d;
  }
  d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt);
  for (int i = 1; i + 1 < n; ++i) d[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
  d[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * dt);
  return d;
}

// Steps where difference quotients are not meaningful: the algebraic
// re-solve at an event makes V jump between step e-1 and e, and the fast
// sub-cycle boundary layer it leaves behind is below the resolution of a
// phasor-timescale stencil. FD-mode metrics are therefore undefined from one
// sample before each event through two nominal cycles after it.
std::vector<char> fd_gap_mask(const Trajectory& traj) {
  int after = 1;
  if (traj.omega_base > 0.0 && traj.dt() > 0.0) {
    const double two_cycles = 2.0 * (2.0 * std::numbers::pi) / traj.omega_base;
    after = std::max(after, static_cast<int>(std::ceil(two_cycles / traj.dt())));
  }
  std::vector<char> gap(traj.num_steps(), 0);
  for (const auto& [step, label] : traj.event_markers) {
    for (int j = step - 1; j <= step + after; ++j) {
      if (j >= 0 && j < traj.num_steps()) gap[j] = 1;
    }
  }
  return gap;
}

std::vector<Complex> column(const Eigen::MatrixXcd& m, int c) {
  std::vector<Complex> out(m.rows());
  for (int i = 0; i < m.rows(); ++i) out[i] = m(i, c);
  return out;
}

}  // namespace

std::vector<double> unwrap_angles(const std::vector<double>& theta) {
  std::vector<double> out = theta;
  double shift = 0.0;
  for (size_t i = 1; i < out.size(); ++i) {
    const double jump = theta[i] - theta[i - 1];
    if (jump > std::numbers::pi) shift -= 2.0 * std::numbers::pi;
    else if (jump < -std::numbers::pi) shift += 2.0 * std::numbers::pi;
    out[i] = theta[i] + shift;
  }
  return out;
}

std::vector<Complex> complex_frequency_of_signal(const std::vector<Complex>& x,
                                                 double dt, DerivativeMode mode,
                                                 const std::vector<Complex>* xdot,
                                                 double magnitude_floor) {
  const int n = static_cast<int>(x.size());
  std::vector<Complex> eta(n, undefined_value());
  std::vector<char> ok(n);
  for (int i = 0; i < n; ++i) ok[i] = std::abs(x[i]) >= magnitude_floor;

  if (mode == DerivativeMode::Analytic) {
    if (!xdot || static_cast<int>(xdot->size()) != n) {
      throw std::invalid_argument(
          "complex_frequency_of_signal: analytic mode requires derivatives");
    }
    for (int i = 0; i < n; ++i) {
      if (ok[i] && is_defined((*xdot)[i])) eta[i] = (*xdot)[i] / x[i];
    }
    return eta;
  }

  if (n < 3 || !(dt > 0.0)) return eta;
  std::vector<double> logmag(n), angle(n);
  for (int i = 0; i < n; ++i) {
    logmag[i] = ok[i] ? std::log(std::abs(x[i])) : kNaN;
    angle[i] = std::arg(x[i]);
  }
  const std::vector<double> th = unwrap_angles(angle);
  const std::vector<double> rho = fd_derivative(logmag, dt);
  const std::vector<double> omg = fd_derivative(th, dt);
  for (int i = 0; i < n; ++i) {
    // a stencil touching a below-floor sample propagates NaN through logmag
    if (ok[i] && std::isfinite(rho[i]) && std::isfinite(omg[i])) {
      eta[i] = {rho[i], omg[i]};
    }
  }
  return eta;
}

LossSeries loss_series(const Trajectory& traj) {
  const int n = traj.num_buses();
  const int m = traj.num_steps();
  LossSeries out;
  out.s_l.resize(m);
  out.magnitude.resize(m);
  for (int i = 0; i < m; ++i) {
    Complex s = 0.0;
    for (int b = 0; b < n; ++b) s += traj.V(i, b) * std::conj(traj.I(i, b));
    out.s_l[i] = s;
    out.magnitude[i] = std::abs(s);
  }
  return out;
}

namespace {

// ds/dt per bus: analytic from the recorded phasor derivatives, otherwise
// finite differences of the power series with event gaps masked.
std::vector<Complex> injection_derivative(const Trajectory& traj, int b,
                                          DerivativeMode mode,
                                          const std::vector<char>& gap) {
  const int m = traj.num_steps();
  std::vector<Complex> out(m);
  if (mode == DerivativeMode::Analytic) {
    for (int i = 0; i < m; ++i) {
      out[i] = traj.Vdot(i, b) * std::conj(traj.I(i, b)) +
               traj.V(i, b) * std::conj(traj.Idot(i, b));
    }
    return out;
  }
  std::vector<Complex> s(m);
  for (int i = 0; i < m; ++i) s[i] = traj.V(i, b) * std::conj(traj.I(i, b));
  out = fd_derivative(s, traj.dt());
  for (int i = 0; i < m; ++i) {
    if (gap[i]) out[i] = undefined_value();
  }
  return out;
}

void require_analytic(const Trajectory& traj, DerivativeMode mode) {
  if (mode == DerivativeMode::Analytic && !traj.has_analytic) {
    throw std::invalid_argument("trajectory carries no analytic derivatives");
  }
}

}  // namespace

std::vector<Complex> loss_cf(const Trajectory& traj, const MetricOptions& opt) {
  require_analytic(traj, opt.mode);
  const LossSeries ls = loss_series(traj);
  const int m = traj.num_steps();

  if (opt.mode == DerivativeMode::Analytic) {
    std::vector<Complex> eta(m, undefined_value());
    for (int i = 0; i < m; ++i) {
      if (ls.magnitude[i] < opt.magnitude_floor) continue;
      Complex sdot = 0.0;
      for (int b = 0; b < traj.num_buses(); ++b) {
        sdot += traj.Vdot(i, b) * std::conj(traj.I(i, b)) +
                traj.V(i, b) * std::conj(traj.Idot(i, b));
      }
      eta[i] = sdot / ls.s_l[i];
    }
    return eta;
  }

  std::vector<Complex> eta = complex_frequency_of_signal(
      ls.s_l, traj.dt(), DerivativeMode::CentralDifference, nullptr,
      opt.magnitude_floor);
  const std::vector<char> gap = fd_gap_mask(traj);
  for (int i = 0; i < m; ++i) {
    if (gap[i]) eta[i] = undefined_value();
  }
  return eta;
}

namespace {

struct PerBusEta {
  std::vector<std::vector<Complex>> eta_v;  // [bus][time]
  std::vector<std::vector<Complex>> eta_i;
};

PerBusEta per_bus_eta(const Trajectory& traj, const MetricOptions& opt) {
  require_analytic(traj, opt.mode);
  const int n = traj.num_buses();
  PerBusEta out;
  out.eta_v.resize(n);
  out.eta_i.resize(n);
  const std::vector<char> gap = fd_gap_mask(traj);
  for (int b = 0; b < n; ++b) {
    const std::vector<Complex> v = column(traj.V, b);
    const std::vector<Complex> i = column(traj.I, b);
    if (opt.mode == DerivativeMode::Analytic) {
      const std::vector<Complex> vd = column(traj.Vdot, b);
      const std::vector<Complex> id = column(traj.Idot, b);
      out.eta_v[b] = complex_frequency_of_signal(v, traj.dt(), opt.mode, &vd,
                                                 opt.magnitude_floor);
      out.eta_i[b] = complex_frequency_of_signal(i, traj.dt(), opt.mode, &id,
                                                 opt.magnitude_floor);
    } else {
      out.eta_v[b] = complex_frequency_of_signal(v, traj.dt(), opt.mode, nullptr,
                                                 opt.magnitude_floor);
      out.eta_i[b] = complex_frequency_of_signal(i, traj.dt(), opt.mode, nullptr,
                                                 opt.magnitude_floor);
      for (int t = 0; t < traj.num_steps(); ++t) {
        if (gap[t]) {
          out.eta_v[b][t] = undefined_value();
          out.eta_i[b][t] = undefined_value();
        }
      }
    }
  }
  return out;
}

enum class WeightedKind { Voltage, Current };

std::vector<Complex> weighted_component(const Trajectory& traj,
                                        const MetricOptions& opt,
                                        WeightedKind kind) {
  const PerBusEta pe = per_bus_eta(traj, opt);
  const LossSeries ls = loss_series(traj);
  const int n = traj.num_buses();
  const int m = traj.num_steps();
  std::vector<Complex> out(m, undefined_value());
  for (int i = 0; i < m; ++i) {
    if (ls.magnitude[i] < opt.injection_floor) continue;
    Complex num = 0.0;
    bool ok = true;
    for (int b = 0; b < n; ++b) {
      const Complex s = traj.V(i, b) * std::conj(traj.I(i, b));
      if (std::abs(s) < opt.injection_floor) continue;  // zero weight
      const Complex eta =
          (kind == WeightedKind::Voltage) ? pe.eta_v[b][i] : pe.eta_i[b][i];
      if (!is_defined(eta)) {
        ok = false;
        break;
      }
      num += (kind == WeightedKind::Voltage) ? s * eta : s * std::conj(eta);
    }
    if (!ok) continue;
    const Complex val = num / ls.s_l[i];
    // the current component is reported so that eta_sl = eta_v + conj(eta_i)
    out[i] = (kind == WeightedKind::Voltage) ? val : std::conj(val);
  }
  return out;
}

}  // namespace

std::vector<Complex> weighted_voltage_component(const Trajectory& traj,
                                                const MetricOptions& opt) {
  return weighted_component(traj, opt, WeightedKind::Voltage);
}

std::vector<Complex> weighted_current_component(const Trajectory& traj,
                                                const MetricOptions& opt) {
  return weighted_component(traj, opt, WeightedKind::Current);
}

DecompositionSeries decompose(const Trajectory& traj, const MetricOptions& opt) {
  DecompositionSeries out;
  out.t = traj.t;
  out.omega_base = traj.omega_base;
  out.eta_sl = loss_cf(traj, opt);
  out.eta_v_sys = weighted_voltage_component(traj, opt);
  out.eta_i_sys = weighted_current_component(traj, opt);
  const LossSeries ls = loss_series(traj);
  out.loss_magnitude = ls.magnitude;
  out.omega_coi = coi_frequency(traj);
  if (out.omega_coi.empty()) out.omega_coi.assign(traj.num_steps(), kNaN);

  const int m = traj.num_steps();
  out.decomp_residual.resize(m, kNaN);
  for (int i = 0; i < m; ++i) {
    if (!is_defined(out.eta_sl[i]) || !is_defined(out.eta_v_sys[i]) ||
        !is_defined(out.eta_i_sys[i])) {
      continue;
    }
    const Complex r = out.eta_sl[i] - out.eta_v_sys[i] - std::conj(out.eta_i_sys[i]);
    out.decomp_residual[i] =
        std::abs(r) / std::max(std::abs(out.eta_sl[i]), opt.residual_floor);
  }
  return out;
}

IdentityReport per_bus_identities(const Trajectory& traj, const MetricOptions& opt) {
  if (traj.epochs.empty()) {
    throw std::invalid_argument(
        "per_bus_identities: trajectory carries no admittance data");
  }
  const PerBusEta pe = per_bus_eta(traj, opt);
  const int n = traj.num_buses();
  const int m = traj.num_steps();
  const std::vector<char> gap = fd_gap_mask(traj);

  IdentityReport rep;
  rep.t = traj.t;

  // Buses below the injection floor for the whole run carry no identity to
  // check (their net current complex frequency is 0/0).
  std::vector<int> included;
  for (int b = 0; b < n; ++b) {
    double smax = 0.0;
    for (int i = 0; i < m; ++i) {
      smax = std::max(smax, std::abs(traj.V(i, b) * std::conj(traj.I(i, b))));
    }
    if (smax >= opt.injection_floor) {
      included.push_back(b);
      rep.bus_ids.push_back(traj.bus_ids[b]);
    } else {
      rep.excluded_buses.push_back(traj.bus_ids[b]);
    }
  }

  std::vector<std::vector<Complex>> sdot(n);
  for (int b : included) sdot[b] = injection_derivative(traj, b, opt.mode, gap);

  rep.rate.assign(m, std::vector<double>(included.size(), kNaN));
  rep.coupling.assign(m, std::vector<double>(included.size(), kNaN));

  size_t epoch_idx = 0;
  for (int i = 0; i < m; ++i) {
    while (epoch_idx + 1 < traj.epochs.size() &&
           traj.epochs[epoch_idx + 1].start_step <= i) {
      ++epoch_idx;
    }
    const auto& Y = traj.epochs[epoch_idx].Y.sparse();
    if (opt.mode == DerivativeMode::CentralDifference && gap[i]) continue;

    for (size_t bi = 0; bi < included.size(); ++bi) {
      const int h = included[bi];
      const Complex s_h = traj.V(i, h) * std::conj(traj.I(i, h));
      if (std::abs(s_h) < opt.injection_floor) continue;
      if (!is_defined(pe.eta_v[h][i]) || !is_defined(pe.eta_i[h][i]) ||
          !is_defined(sdot[h][i])) {
        continue;
      }
      Complex rhs = 0.0;      // sum_k s_hk * conj(eta_v_k)
      double term_scale = 0;  // conditioning scale of the summed identity
      bool ok = true;
      for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(Y, h);
           it; ++it) {
        const int k = static_cast<int>(it.col());
        if (!is_defined(pe.eta_v[k][i])) {
          ok = false;
          break;
        }
        const Complex s_hk =
            traj.V(i, h) * std::conj(it.value() * traj.V(i, k));
        rhs += s_hk * std::conj(pe.eta_v[k][i]);
        term_scale += std::abs(s_hk) * std::abs(pe.eta_v[k][i]);
      }
      if (!ok) continue;

      const Complex lhs_rate = sdot[h][i];
      const Complex rhs_rate = s_h * pe.eta_v[h][i] + rhs;
      const Complex lhs_coupling = s_h * std::conj(pe.eta_i[h][i]);
      // Residuals are relative to the largest contribution entering the
      // identity: at transit-heavy buses the through-flow terms dominate and
      // nearly cancel, so the cancelling sum itself is not a usable scale.
      term_scale += std::abs(s_h) * std::abs(pe.eta_v[h][i]);
      const double r_rate =
          std::abs(lhs_rate - rhs_rate) /
          std::max({std::abs(lhs_rate), term_scale, opt.residual_floor});
      const double r_coupling =
          std::abs(lhs_coupling - rhs) /
          std::max({std::abs(lhs_coupling), term_scale, opt.residual_floor});
      rep.rate[i][bi] = r_rate;
      rep.coupling[i][bi] = r_coupling;
      if (r_rate > rep.max_rate) {
        rep.max_rate = r_rate;
        rep.argmax_rate_t = traj.t[i];
        rep.argmax_rate_bus = traj.bus_ids[h];
      }
      if (r_coupling > rep.max_coupling) {
        rep.max_coupling = r_coupling;
        rep.argmax_coupling_t = traj.t[i];
        rep.argmax_coupling_bus = traj.bus_ids[h];
      }
    }
  }
  return rep;
}

std::vector<double> coi_frequency(const Trajectory& traj) {
  double total_h = 0.0;
  std::vector<std::pair<int, double>> omega_cols;  // (state col, H)
  for (const DeviceMeta& d : traj.devices) {
    if (d.kind == "gfm" && d.inertia_h > 0.0) {
      omega_cols.emplace_back(d.state_offset + 1, d.inertia_h);
      total_h += d.inertia_h;
    }
  }
  if (omega_cols.empty()) return {};
  std::vector<double> out(traj.num_steps(), 0.0);
  for (int i = 0; i < traj.num_steps(); ++i) {
    double acc = 0.0;
    for (const auto& [col, h] : omega_cols) acc += h * traj.states(i, col);
    out[i] = acc / total_h;
  }
  return out;
}

std::vector<double> coi_frequency(const Trajectory& traj,
                                  const std::vector<GfmVsm>& devices) {
  double total_h = 0.0;
  std::vector<std::pair<int, double>> omega_cols;
  for (const GfmVsm& d : devices) {
    const int col = traj.state_index(d.name + ".omega");
    if (col >= 0 && d.inertia_h > 0.0) {
      omega_cols.emplace_back(col, d.inertia_h);
      total_h += d.inertia_h;
    }
  }
  if (omega_cols.empty()) return {};
  std::vector<double> out(traj.num_steps(), 0.0);
  for (int i = 0; i < traj.num_steps(); ++i) {
    double acc = 0.0;
    for (const auto& [col, h] : omega_cols) acc += h * traj.states(i, col);
    out[i] = acc / total_h;
  }
  return out;
}

double rocof_at(const std::vector<double>& t, const std::vector<double>& series,
                double t_event, double offset, double window) {
  if (t.size() != series.size() || t.empty()) {
    throw std::invalid_argument("rocof_at: series/time mismatch");
  }
  const double t0 = t_event + offset;
  const double lo = t0 - window / 2.0;
  const double hi = t0 + window / 2.0;
  const double tiny = 1e-9;
  if (lo < t.front() - tiny || hi > t.back() + tiny) {
    throw std::invalid_argument("rocof_at: window exceeds series bounds");
  }
  double st = 0.0, sy = 0.0;
  int cnt = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= lo - tiny && t[i] <= hi + tiny && std::isfinite(series[i])) {
      st += t[i];
      sy += series[i];
      ++cnt;
    }
  }
  if (cnt < 2) throw std::invalid_argument("rocof_at: not enough samples in window");
  const double tbar = st / cnt, ybar = sy / cnt;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= lo - tiny && t[i] <= hi + tiny && std::isfinite(series[i])) {
      num += (t[i] - tbar) * (series[i] - ybar);
      den += (t[i] - tbar) * (t[i] - tbar);
    }
  }
  return num / den;
}

void export_metrics_csv(const DecompositionSeries& series, std::ostream& os,
                        bool omega_in_pu) {
  os << "t,s_l_mag,rho_sl,omega_sl,rho_vsys,omega_vsys,rho_isys,omega_isys,"
        "omega_coi,decomp_residual\n";
  const double wscale = omega_in_pu ? 1.0 / series.omega_base : 1.0;
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v);
    os << buf;
  };
  for (size_t i = 0; i < series.t.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", series.t[i]);
    os << buf;
    emit(series.loss_magnitude[i]);
    emit(series.eta_sl[i].real());
    emit(series.eta_sl[i].imag() * wscale);
    emit(series.eta_v_sys[i].real());
    emit(series.eta_v_sys[i].imag() * wscale);
    emit(series.eta_i_sys[i].real());
    emit(series.eta_i_sys[i].imag() * wscale);
    emit(series.omega_coi[i]);
    emit(series.decomp_residual[i]);
    os << "\n";
  }
}

void export_identities_csv(const IdentityReport& report, std::ostream& os) {
  os << "t,bus,rate_residual,coupling_residual\n";
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v);
    os << buf;
  };
  for (size_t i = 0; i < report.t.size(); ++i) {
    for (size_t b = 0; b < report.bus_ids.size(); ++b) {
      std::snprintf(buf, sizeof(buf), "%.17g", report.t[i]);
      os << buf << "," << report.bus_ids[b];
      emit(report.rate[i][b]);
      emit(report.coupling[i][b]);
      os << "\n";
    }
  }
  os << "# max_rate_residual," << report.max_rate << ",t," << report.argmax_rate_t
     << ",bus," << report.argmax_rate_bus << "\n";
  os << "# max_coupling_residual," << report.max_coupling << ",t,"
     << report.argmax_coupling_t << ",bus," << report.argmax_coupling_bus << "\n";
  os << "# excluded_buses";
  for (int b : report.excluded_buses) os << "," << b;
  os << "\n";
}

}  // namespace cfsim
