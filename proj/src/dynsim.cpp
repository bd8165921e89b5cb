#include "cfsim/dynsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cfsim {

void DaeModel::alg_jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                             Eigen::MatrixXd& dg_dy, Eigen::MatrixXd& dg_dx) const {
  const int nx = num_states();
  const int ny = num_alg();
  dg_dy.resize(ny, ny);
  dg_dx.resize(ny, nx);
  Eigen::VectorXd gp(ny), gm(ny);
  Eigen::VectorXd xp = x, yp = y;
  for (int j = 0; j < ny; ++j) {
    const double h = 1e-7 * std::max(1.0, std::abs(y(j)));
    yp(j) = y(j) + h;
    alg_residual(x, yp, gp);
    yp(j) = y(j) - h;
    alg_residual(x, yp, gm);
    yp(j) = y(j);
    dg_dy.col(j) = (gp - gm) / (2.0 * h);
  }
  for (int j = 0; j < nx; ++j) {
    const double h = 1e-7 * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + h;
    alg_residual(xp, y, gp);
    xp(j) = x(j) - h;
    alg_residual(xp, y, gm);
    xp(j) = x(j);
    dg_dx.col(j) = (gp - gm) / (2.0 * h);
  }
}

TrapezoidalStepper::TrapezoidalStepper(const DaeModel& model, IntegratorConfig cfg)
    : model_(model), cfg_(cfg) {}

void TrapezoidalStepper::build_jacobian(const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& y, double dt) {
  const int nx = model_.num_states();
  const int ny = model_.num_alg();
  const int m = nx + ny;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);

  if (nx > 0) {
    // df/dx and df/dy by forward differences; the iteration matrix only
    // drives convergence, accuracy comes from the residual tolerance.
    Eigen::VectorXd f0(nx), f1(nx);
    model_.deriv(x, y, f0);
    Eigen::VectorXd xp = x, yp = y;
    for (int j = 0; j < nx; ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(x(j)));
      xp(j) = x(j) + h;
      model_.deriv(xp, y, f1);
      xp(j) = x(j);
      J.block(0, j, nx, 1) = -(dt / 2.0) * (f1 - f0) / h;
    }
    for (int j = 0; j < ny; ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(y(j)));
      yp(j) = y(j) + h;
      model_.deriv(x, yp, f1);
      yp(j) = y(j);
      J.block(0, nx + j, nx, 1) = -(dt / 2.0) * (f1 - f0) / h;
    }
    J.topLeftCorner(nx, nx) += Eigen::MatrixXd::Identity(nx, nx);
  }
  if (ny > 0) {
    Eigen::MatrixXd dg_dy, dg_dx;
    model_.alg_jacobians(x, y, dg_dy, dg_dx);
    J.bottomLeftCorner(ny, nx) = dg_dx;
    J.bottomRightCorner(ny, ny) = dg_dy;
  }
  lu_.compute(J);
  jac_dt_ = dt;
  jac_valid_ = true;
  refresh_next_ = false;
}

bool TrapezoidalStepper::newton(Eigen::VectorXd& x, Eigen::VectorXd& y,
                                const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& f0, double dt,
                                int max_iter) {
  const int nx = model_.num_states();
  const int ny = model_.num_alg();
  Eigen::VectorXd f1(nx), g(ny), r(nx + ny), dz;
  for (int it = 0; it < max_iter; ++it) {
    model_.deriv(x, y, f1);
    if (ny > 0) model_.alg_residual(x, y, g);
    r.head(nx) = x - x0 - (dt / 2.0) * (f0 + f1);
    r.tail(ny) = g;
    if (r.lpNorm<Eigen::Infinity>() < cfg_.newton_tol) {
      if (it > 4) refresh_next_ = true;
      return true;
    }
    dz = lu_.solve(r);
    if (!dz.allFinite()) return false;
    x -= dz.head(nx);
    y -= dz.tail(ny);
  }
  return false;
}

void TrapezoidalStepper::step(Eigen::VectorXd& x, Eigen::VectorXd& y, double dt) {
  const int nx = model_.num_states();
  Eigen::VectorXd f0(nx);
  model_.deriv(x, y, f0);
  const Eigen::VectorXd x0 = x;
  const Eigen::VectorXd y_in = y;

  bool fresh = false;
  if (!jac_valid_ || jac_dt_ != dt || refresh_next_) {
    build_jacobian(x, y, dt);
    fresh = true;
  }
  if (newton(x, y, x0, f0, dt, cfg_.newton_max_iter)) return;

  if (!fresh) {
    // Retry once with a Jacobian evaluated at the current iterate.
    build_jacobian(x, y, dt);
    if (newton(x, y, x0, f0, dt, cfg_.newton_max_iter)) return;
  }
  x = x0;
  y = y_in;
  throw std::runtime_error("trapezoidal step: Newton did not converge");
}

void TrapezoidalStepper::solve_algebraic(const Eigen::VectorXd& x,
                                         Eigen::VectorXd& y) {
  const int ny = model_.num_alg();
  if (ny == 0) return;
  Eigen::MatrixXd dg_dy, dg_dx;
  Eigen::VectorXd g(ny);
  for (int it = 0; it < cfg_.newton_max_iter; ++it) {
    model_.alg_residual(x, y, g);
    if (g.lpNorm<Eigen::Infinity>() < cfg_.newton_tol) return;
    model_.alg_jacobians(x, y, dg_dy, dg_dx);
    Eigen::VectorXd dy = dg_dy.partialPivLu().solve(g);
    if (!dy.allFinite()) break;
    y -= dy;
  }
  model_.alg_residual(x, y, g);
  if (g.lpNorm<Eigen::Infinity>() >= cfg_.newton_tol) {
    throw std::runtime_error("algebraic re-solve did not converge");
  }
}

const AdmittanceMatrix& Trajectory::admittance_at(int step) const {
  const YEpoch* best = nullptr;
  for (const YEpoch& e : epochs) {
    if (e.start_step <= step) best = &e;
  }
  if (!best) throw std::runtime_error("trajectory has no admittance epoch");
  return best->Y;
}

int Trajectory::state_index(const std::string& name) const {
  for (size_t i = 0; i < state_names.size(); ++i) {
    if (state_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

PowerSystemDae::PowerSystemDae(Network network, std::vector<GfmVsm> gfm,
                               std::vector<GflConverter> gfl,
                               std::vector<LoadModel> loads)
    : net_(std::move(network)),
      gfm_(std::move(gfm)),
      gfl_(std::move(gfl)),
      loads_(std::move(loads)) {
  n_ = net_.size();
  if (gfm_.empty() && gfl_.empty()) {
    throw std::invalid_argument("PowerSystemDae: no source devices");
  }
  int off = 0;
  for (const GfmVsm& d : gfm_) {
    const int b = net_.bus_index(d.bus);
    if (b < 0) throw std::invalid_argument("GFM device on unknown bus " + std::to_string(d.bus));
    gfm_bus_.push_back(b);
    gfm_off_.push_back(off);
    off += GfmVsm::kNumStates;
  }
  for (const GflConverter& d : gfl_) {
    const int b = net_.bus_index(d.bus);
    if (b < 0) throw std::invalid_argument("GFL device on unknown bus " + std::to_string(d.bus));
    gfl_bus_.push_back(b);
    gfl_off_.push_back(off);
    off += GflConverter::kNumStates;
  }
  nx_ = off;
  for (const LoadModel& l : loads_) {
    if (net_.bus_index(l.bus) < 0) {
      throw std::invalid_argument("load on unknown bus " + std::to_string(l.bus));
    }
  }
  rebuild_admittance();
}

void PowerSystemDae::rebuild_admittance() {
  Network tmp = net_;
  for (const LoadModel& l : loads_) {
    if (!l.connected) continue;
    const Complex ysh = l.shunt_admittance();
    Bus& b = tmp.buses[tmp.bus_index(l.bus)];
    b.shunt_g += ysh.real();
    b.shunt_b += ysh.imag();
  }
  Y_ = build_admittance(tmp);
}

Eigen::VectorXcd PowerSystemDae::bus_voltages(const Eigen::VectorXd& y) const {
  Eigen::VectorXcd V(n_);
  for (int i = 0; i < n_; ++i) V(i) = Complex{y(i), y(n_ + i)};
  return V;
}

void PowerSystemDae::deriv(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           Eigen::VectorXd& f) const {
  f.resize(nx_);
  const double wb = net_.omega_base();
  for (size_t i = 0; i < gfm_.size(); ++i) {
    const int off = gfm_off_[i];
    const int b = gfm_bus_[i];
    const GfmVsm::State st{x(off), x(off + 1), x(off + 2)};
    const Complex v{y(b), y(n_ + b)};
    const GfmDerivatives d = gfm_derivatives(gfm_[i], st, v, wb);
    f(off) = d.d_delta;
    f(off + 1) = d.d_omega;
    f(off + 2) = d.d_emf;
  }
  for (size_t i = 0; i < gfl_.size(); ++i) {
    const int off = gfl_off_[i];
    const int b = gfl_bus_[i];
    const GflConverter::State st{x(off), x(off + 1), x(off + 2), x(off + 3)};
    const Complex v{y(b), y(n_ + b)};
    const GflDerivatives d = gfl_derivatives(gfl_[i], st, v, wb);
    f(off) = d.d_theta_pll;
    f(off + 1) = d.d_x_pll;
    f(off + 2) = d.d_id;
    f(off + 3) = d.d_iq;
  }
}

Eigen::VectorXcd PowerSystemDae::injected_currents(const Eigen::VectorXd& x,
                                                   const Eigen::VectorXd& y) const {
  Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(n_);
  for (size_t i = 0; i < gfm_.size(); ++i) {
    const int off = gfm_off_[i];
    const int b = gfm_bus_[i];
    const GfmVsm::State st{x(off), x(off + 1), x(off + 2)};
    inj(b) += injected_current(gfm_[i], st, Complex{y(b), y(n_ + b)});
  }
  for (size_t i = 0; i < gfl_.size(); ++i) {
    const int off = gfl_off_[i];
    const int b = gfl_bus_[i];
    const GflConverter::State st{x(off), x(off + 1), x(off + 2), x(off + 3)};
    inj(b) += injected_current(gfl_[i], st, Complex{y(b), y(n_ + b)});
  }
  return inj;
}

void PowerSystemDae::alg_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                  Eigen::VectorXd& g) const {
  const Eigen::VectorXcd V = bus_voltages(y);
  const Eigen::VectorXcd r = Y_.multiply(V) - injected_currents(x, y);
  g.resize(2 * n_);
  for (int i = 0; i < n_; ++i) {
    g(i) = r(i).real();
    g(n_ + i) = r(i).imag();
  }
}

void PowerSystemDae::alg_jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& /*y*/,
                                   Eigen::MatrixXd& dg_dy, Eigen::MatrixXd& dg_dx) const {
  dg_dy = Eigen::MatrixXd::Zero(2 * n_, 2 * n_);
  dg_dx = Eigen::MatrixXd::Zero(2 * n_, nx_);

  const auto& mat = Y_.sparse();
  for (int h = 0; h < n_; ++h) {
    for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(mat, h); it; ++it) {
      const int k = static_cast<int>(it.col());
      const double gy = it.value().real();
      const double by = it.value().imag();
      dg_dy(h, k) += gy;
      dg_dy(h, n_ + k) += -by;
      dg_dy(n_ + h, k) += by;
      dg_dy(n_ + h, n_ + k) += gy;
    }
  }

  auto stamp_state = [&](int row_bus, int col, Complex dI) {
    dg_dx(row_bus, col) = -dI.real();
    dg_dx(n_ + row_bus, col) = -dI.imag();
  };

  for (size_t i = 0; i < gfm_.size(); ++i) {
    const int off = gfm_off_[i];
    const int b = gfm_bus_[i];
    const Complex c = 1.0 / gfm_[i].coupling_z();  // -dI/dv
    dg_dy(b, b) += c.real();
    dg_dy(b, n_ + b) += -c.imag();
    dg_dy(n_ + b, b) += c.imag();
    dg_dy(n_ + b, n_ + b) += c.real();

    const Complex emf = std::polar(x(off + 2), x(off));
    stamp_state(b, off, Complex{0.0, 1.0} * emf * c);          // d/d delta
    stamp_state(b, off + 2, std::polar(1.0, x(off)) * c);      // d/d emf
  }
  for (size_t i = 0; i < gfl_.size(); ++i) {
    const int off = gfl_off_[i];
    const int b = gfl_bus_[i];
    const Complex rot = std::polar(1.0, x(off));
    const Complex idev = Complex{x(off + 2), x(off + 3)} * rot;
    stamp_state(b, off, Complex{0.0, 1.0} * idev);  // d/d theta_pll
    stamp_state(b, off + 2, rot);                   // d/d id
    stamp_state(b, off + 3, Complex{0.0, 1.0} * rot);
  }
}

void PowerSystemDae::initialize(const PowerFlowSolution& pf, double residual_tol) {
  if (static_cast<int>(pf.voltages.size()) != n_) {
    throw std::invalid_argument("initialize: power flow dimension mismatch");
  }
  for (LoadModel& l : loads_) {
    l.v_init = pf.voltages[net_.bus_index(l.bus)].magnitude;
  }
  rebuild_admittance();

  // Device injection = net bus injection plus the local load consumption.
  std::vector<int> devices_at(n_, 0);
  auto device_injection = [&](int b) {
    Complex s = pf.injections[b].s();
    for (const LoadModel& l : loads_) {
      if (l.connected && net_.bus_index(l.bus) == b) s += Complex{l.p0, l.q0};
    }
    return s;
  };

  x0_.resize(nx_);
  y0_.resize(2 * n_);
  for (int i = 0; i < n_; ++i) {
    const Complex v = pf.voltages[i].phasor();
    y0_(i) = v.real();
    y0_(n_ + i) = v.imag();
  }
  for (size_t i = 0; i < gfm_.size(); ++i) {
    const int b = gfm_bus_[i];
    if (devices_at[b]++) throw std::invalid_argument("multiple devices at bus " + std::to_string(gfm_[i].bus));
    const GfmVsm::State st = init_gfm(gfm_[i], pf.voltages[b].phasor(), device_injection(b));
    x0_(gfm_off_[i]) = st.delta;
    x0_(gfm_off_[i] + 1) = st.omega;
    x0_(gfm_off_[i] + 2) = st.emf;
  }
  for (size_t i = 0; i < gfl_.size(); ++i) {
    const int b = gfl_bus_[i];
    if (devices_at[b]++) throw std::invalid_argument("multiple devices at bus " + std::to_string(gfl_[i].bus));
    const GflConverter::State st = init_gfl(gfl_[i], pf.voltages[b].phasor(), device_injection(b));
    x0_(gfl_off_[i]) = st.theta_pll;
    x0_(gfl_off_[i] + 1) = st.x_pll;
    x0_(gfl_off_[i] + 2) = st.id;
    x0_(gfl_off_[i] + 3) = st.iq;
  }

  Eigen::VectorXd f(nx_), g(2 * n_);
  deriv(x0_, y0_, f);
  alg_residual(x0_, y0_, g);
  const auto meta = device_meta();
  for (const DeviceMeta& m : meta) {
    const double worst =
        f.segment(m.state_offset, m.num_states).lpNorm<Eigen::Infinity>();
    if (worst > residual_tol) {
      throw std::runtime_error("device " + m.name +
                               " not at equilibrium: state derivative " +
                               std::to_string(worst));
    }
  }
  if (g.lpNorm<Eigen::Infinity>() > residual_tol) {
    throw std::runtime_error("initialization: nodal current residual " +
                             std::to_string(g.lpNorm<Eigen::Infinity>()));
  }
}

bool PowerSystemDae::apply_event(const Event& ev) {
  switch (ev.kind) {
    case EventKind::LoadOutage:
      for (LoadModel& l : loads_) {
        if (l.bus == ev.bus && l.connected) {
          l.connected = false;
          rebuild_admittance();
          return true;
        }
      }
      throw std::runtime_error("load outage: no connected load at bus " +
                               std::to_string(ev.bus));
    case EventKind::LoadStep:
      for (LoadModel& l : loads_) {
        if (l.bus == ev.bus && l.connected) {
          l.p0 += ev.delta_p;
          l.q0 += ev.delta_q;
          rebuild_admittance();
          return true;
        }
      }
      throw std::runtime_error("load step: no connected load at bus " +
                               std::to_string(ev.bus));
    case EventKind::SetpointStep: {
      auto bump = [&](double& field) { field += ev.delta; };
      auto apply_to = [&](auto& dev) {
        if (ev.field == "p_ref") bump(dev.p_ref);
        else if (ev.field == "q_ref") bump(dev.q_ref);
        else if (ev.field == "v_ref") bump(dev.v_ref);
        else throw std::runtime_error("setpoint step: unknown field " + ev.field);
      };
      for (GfmVsm& d : gfm_) {
        if (d.name == ev.device) {
          apply_to(d);
          return false;
        }
      }
      for (GflConverter& d : gfl_) {
        if (d.name == ev.device) {
          apply_to(d);
          return false;
        }
      }
      throw std::runtime_error("setpoint step: unknown device " + ev.device);
    }
  }
  return false;
}

std::vector<DeviceMeta> PowerSystemDae::device_meta() const {
  std::vector<DeviceMeta> out;
  for (size_t i = 0; i < gfm_.size(); ++i) {
    out.push_back({gfm_[i].name, "gfm", gfm_[i].bus, gfm_[i].inertia_h,
                   gfm_off_[i], GfmVsm::kNumStates});
  }
  for (size_t i = 0; i < gfl_.size(); ++i) {
    out.push_back({gfl_[i].name, "gfl", gfl_[i].bus, 0.0, gfl_off_[i],
                   GflConverter::kNumStates});
  }
  return out;
}

std::vector<std::string> PowerSystemDae::state_names() const {
  std::vector<std::string> out;
  for (const GfmVsm& d : gfm_) {
    out.push_back(d.name + ".delta");
    out.push_back(d.name + ".omega");
    out.push_back(d.name + ".emf");
  }
  for (const GflConverter& d : gfl_) {
    out.push_back(d.name + ".theta_pll");
    out.push_back(d.name + ".x_pll");
    out.push_back(d.name + ".id");
    out.push_back(d.name + ".iq");
  }
  return out;
}

std::vector<std::string> PowerSystemDae::active_guards(const Eigen::VectorXd& x,
                                                       const Eigen::VectorXd& y) const {
  std::vector<std::string> out;
  for (size_t i = 0; i < gfl_.size(); ++i) {
    const int b = gfl_bus_[i];
    if (std::abs(Complex{y(b), y(n_ + b)}) < GflConverter::kLowVoltageFloor) {
      out.push_back(gfl_[i].name);
    }
  }
  (void)x;
  return out;
}

Eigen::VectorXd PowerSystemDae::voltage_derivatives(const Eigen::VectorXd& x,
                                                    const Eigen::VectorXd& y) const {
  Eigen::VectorXd f(nx_);
  deriv(x, y, f);
  Eigen::MatrixXd dg_dy, dg_dx;
  alg_jacobians(x, y, dg_dy, dg_dx);
  Eigen::VectorXd rhs = -dg_dx * f;
  Eigen::VectorXd ydot = dg_dy.partialPivLu().solve(rhs);
  if (!ydot.allFinite()) {
    throw std::runtime_error("voltage_derivatives: singular algebraic Jacobian");
  }
  return ydot;
}

namespace {

std::string event_label(const Event& ev) {
  switch (ev.kind) {
    case EventKind::LoadOutage:
      return "load_outage bus " + std::to_string(ev.bus);
    case EventKind::LoadStep:
      return "load_step bus " + std::to_string(ev.bus);
    case EventKind::SetpointStep:
      return "setpoint_step " + ev.device + "." + ev.field;
  }
  return "event";
}

}  // namespace

Trajectory run_simulation(const SimulationInput& input, const PowerFlowSolution& pf) {
  PowerSystemDae dae(input.network, input.gfm, input.gfl, input.loads);
  dae.initialize(pf);

  const IntegratorConfig& cfg = input.config;
  if (!(cfg.dt > 0.0) || !(cfg.t_end >= 0.0)) {
    throw std::invalid_argument("run_simulation: bad integrator configuration");
  }
  TrapezoidalStepper stepper(dae, cfg);

  std::vector<Event> events = input.events;
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.time < b.time; });

  const int n = dae.network().size();
  const int nx = dae.num_states();
  const int nsteps = static_cast<int>(std::llround(cfg.t_end / cfg.dt)) + 1;

  Trajectory traj;
  traj.omega_base = dae.network().omega_base();
  traj.has_analytic = true;
  for (const Bus& b : dae.network().buses) traj.bus_ids.push_back(b.id);
  traj.state_names = dae.state_names();
  traj.devices = dae.device_meta();
  traj.t.resize(nsteps);
  traj.V.resize(nsteps, n);
  traj.I.resize(nsteps, n);
  traj.Vdot.resize(nsteps, n);
  traj.Idot.resize(nsteps, n);
  traj.states.resize(nsteps, nx);
  // Bus injections are measured against the transmission network alone, so a
  // load shows up as a negative injection at its bus rather than vanishing
  // into the admittance matrix. Load events then leave this matrix unchanged.
  const AdmittanceMatrix Ynet = build_admittance(dae.network());
  traj.epochs.push_back({0, Ynet});

  Eigen::VectorXd x = dae.initial_states();
  Eigen::VectorXd y = dae.initial_alg();
  size_t ev_idx = 0;

  auto record = [&](int i, double t) {
    traj.t[i] = t;
    const Eigen::VectorXcd V = dae.bus_voltages(y);
    const Eigen::VectorXcd I = Ynet.multiply(V);
    const Eigen::VectorXd ydot = dae.voltage_derivatives(x, y);
    Eigen::VectorXcd Vdot(n);
    for (int b = 0; b < n; ++b) Vdot(b) = Complex{ydot(b), ydot(n + b)};
    const Eigen::VectorXcd Idot = Ynet.multiply(Vdot);
    traj.V.row(i) = V;
    traj.I.row(i) = I;
    traj.Vdot.row(i) = Vdot;
    traj.Idot.row(i) = Idot;
    traj.states.row(i) = x;
    for (const std::string& name : dae.active_guards(x, y)) {
      traj.guard_flags.emplace_back(i, name);
    }
  };

  for (int i = 0; i < nsteps; ++i) {
    const double t = i * cfg.dt;
    bool applied = false;
    bool rebuilt = false;
    while (ev_idx < events.size() && events[ev_idx].time <= t + 1e-9 * cfg.dt) {
      rebuilt = dae.apply_event(events[ev_idx]) || rebuilt;
      traj.event_markers.emplace_back(i, event_label(events[ev_idx]));
      applied = true;
      ++ev_idx;
    }
    if (applied) {
      stepper.invalidate_jacobian();
      stepper.solve_algebraic(x, y);
      (void)rebuilt;
    }
    record(i, t);
    if (i + 1 < nsteps) {
      try {
        stepper.step(x, y, cfg.dt);
      } catch (const std::exception& e) {
        traj.t.resize(i + 1);
        traj.V.conservativeResize(i + 1, n);
        traj.I.conservativeResize(i + 1, n);
        traj.Vdot.conservativeResize(i + 1, n);
        traj.Idot.conservativeResize(i + 1, n);
        traj.states.conservativeResize(i + 1, nx);
        throw std::runtime_error(std::string(e.what()) + " at t = " +
                                 std::to_string(t + cfg.dt) + " s");
      }
    }
  }
  return traj;
}

void export_trajectory_csv(const Trajectory& traj, std::ostream& os) {
  const int n = traj.num_buses();
  os << "t";
  auto col = [&](const char* prefix, int id) { os << "," << prefix << "_" << id; };
  for (int b = 0; b < n; ++b) col("v", traj.bus_ids[b]);
  for (int b = 0; b < n; ++b) col("theta", traj.bus_ids[b]);
  for (int b = 0; b < n; ++b) col("p", traj.bus_ids[b]);
  for (int b = 0; b < n; ++b) col("q", traj.bus_ids[b]);
  for (int b = 0; b < n; ++b) col("ir", traj.bus_ids[b]);
  for (int b = 0; b < n; ++b) col("ii", traj.bus_ids[b]);
  for (const std::string& s : traj.state_names) os << "," << s;
  os << "\n";

  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v);
    os << buf;
  };
  for (int i = 0; i < traj.num_steps(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", traj.t[i]);
    os << buf;
    for (int b = 0; b < n; ++b) emit(std::abs(traj.V(i, b)));
    for (int b = 0; b < n; ++b) emit(std::arg(traj.V(i, b)));
    for (int b = 0; b < n; ++b) {
      emit((traj.V(i, b) * std::conj(traj.I(i, b))).real());
    }
    for (int b = 0; b < n; ++b) {
      emit((traj.V(i, b) * std::conj(traj.I(i, b))).imag());
    }
    for (int b = 0; b < n; ++b) emit(traj.I(i, b).real());
    for (int b = 0; b < n; ++b) emit(traj.I(i, b).imag());
    for (int j = 0; j < traj.states.cols(); ++j) emit(traj.states(i, j));
    os << "\n";
  }
}

}  // namespace cfsim
