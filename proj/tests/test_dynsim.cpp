#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include "cfsim/dynsim.hpp"

using namespace cfsim;

namespace {

// dx/dt = -x with a trivial algebraic companion y = x.
class ScalarDecay : public DaeModel {
 public:
  int num_states() const override { return 1; }
  int num_alg() const override { return 1; }
  void deriv(const Eigen::VectorXd& x, const Eigen::VectorXd&,
             Eigen::VectorXd& f) const override {
    f.resize(1);
    f(0) = -x(0);
  }
  void alg_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                    Eigen::VectorXd& g) const override {
    g.resize(1);
    g(0) = y(0) - x(0);
  }
};

double integrate_decay(double dt, double t_end) {
  ScalarDecay model;
  IntegratorConfig cfg;
  cfg.dt = dt;
  cfg.t_end = t_end;
  TrapezoidalStepper stepper(model, cfg);
  Eigen::VectorXd x(1), y(1);
  x(0) = 1.0;
  y(0) = 1.0;
  const int n = static_cast<int>(std::round(t_end / dt));
  for (int i = 0; i < n; ++i) stepper.step(x, y, dt);
  return x(0);
}

Network two_bus_net() {
  Network net;
  net.buses = {{1, "gen", 345.0, 0.0, 0.0}, {2, "load", 345.0, 0.0, 0.0}};
  Branch br;
  br.from_bus = 1;
  br.to_bus = 2;
  br.resistance_r = 0.01;
  br.reactance_x = 0.1;
  net.branches = {br};
  return net;
}

// GFM at bus 1 supplying a constant-impedance load at bus 2.
SimulationInput two_bus_input(double t_end) {
  SimulationInput in;
  in.network = two_bus_net();
  GfmVsm g;
  g.name = "g1";
  g.bus = 1;
  in.gfm = {g};
  LoadModel load;
  load.bus = 2;
  load.p0 = 0.5;
  load.q0 = 0.2;
  in.loads = {load};
  in.config.dt = 1e-3;
  in.config.t_end = t_end;
  return in;
}

PowerFlowSolution two_bus_pf(const Network& net) {
  const AdmittanceMatrix Y = build_admittance(net);
  std::vector<BusSpec> spec(2);
  spec[0] = {BusKind::Slack, 0.0, 0.0, 1.0};
  spec[1] = {BusKind::PQ, -0.5, -0.2, 1.0};
  return solve_power_flow(net, Y, spec);
}

}  // namespace

TEST_CASE("one trapezoidal step matches the closed form") {
  const double dt = 1e-3;
  const double expected = (1.0 - dt / 2.0) / (1.0 + dt / 2.0);
  CHECK(integrate_decay(dt, dt) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(integrate_decay(dt, dt) == doctest::Approx(0.99900049975).epsilon(1e-9));
}

TEST_CASE("trapezoidal integration is second-order accurate") {
  const double exact = std::exp(-1.0);
  const double e1 = std::abs(integrate_decay(0.1, 1.0) - exact);
  const double e2 = std::abs(integrate_decay(0.05, 1.0) - exact);
  const double ratio = e1 / e2;
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("power-system DAE initializes at the power-flow equilibrium") {
  SimulationInput in = two_bus_input(1.0);
  const PowerFlowSolution pf = two_bus_pf(in.network);
  REQUIRE(pf.converged);

  PowerSystemDae dae(in.network, in.gfm, in.gfl, in.loads);
  dae.initialize(pf);
  CHECK(dae.num_states() == GfmVsm::kNumStates);
  CHECK(dae.num_alg() == 4);

  Eigen::VectorXd g;
  dae.alg_residual(dae.initial_states(), dae.initial_alg(), g);
  CHECK(g.norm() < 1e-9);
  Eigen::VectorXd f;
  dae.deriv(dae.initial_states(), dae.initial_alg(), f);
  CHECK(f.norm() < 1e-9);
}

TEST_CASE("equilibrium trajectories stay constant") {
  SimulationInput in = two_bus_input(1.0);
  const PowerFlowSolution pf = two_bus_pf(in.network);
  const Trajectory traj = run_simulation(in, pf);

  REQUIRE(traj.num_steps() == 1001);
  REQUIRE(traj.num_buses() == 2);
  CHECK(traj.dt() == doctest::Approx(1e-3));
  CHECK(traj.has_analytic);
  CHECK(traj.event_markers.empty());
  CHECK(traj.guard_flags.empty());

  for (int i = 0; i < traj.num_steps(); ++i) {
    for (int b = 0; b < 2; ++b) {
      CHECK(std::abs(traj.V(i, b) - traj.V(0, b)) < 1e-10);
      CHECK(std::abs(traj.Vdot(i, b)) < 1e-9);
    }
    for (int k = 0; k < traj.states.cols(); ++k) {
      CHECK(std::abs(traj.states(i, k) - traj.states(0, k)) < 1e-10);
    }
  }
}

TEST_CASE("load buses appear as negative injections") {
  // The recorded currents are measured against the transmission network, so
  // the load bus must show the consumed power with a minus sign.
  SimulationInput in = two_bus_input(0.01);
  const PowerFlowSolution pf = two_bus_pf(in.network);
  const Trajectory traj = run_simulation(in, pf);
  const Complex s_load = traj.V(0, 1) * std::conj(traj.I(0, 1));
  CHECK(s_load.real() == doctest::Approx(-0.5).epsilon(1e-8));
  CHECK(s_load.imag() == doctest::Approx(-0.2).epsilon(1e-8));
  // the generator covers the load plus series losses
  const Complex s_gen = traj.V(0, 0) * std::conj(traj.I(0, 0));
  CHECK(s_gen.real() > 0.5);
  CHECK((s_gen + s_load).real() > 0.0);  // positive series losses
}

TEST_CASE("recorded currents are network-consistent in every epoch") {
  SimulationInput in = two_bus_input(1.0);
  in.events.push_back({0.4, EventKind::LoadStep, 2, "", "", 0.1, 0.05, 0.0});
  const PowerFlowSolution pf = two_bus_pf(in.network);
  const Trajectory traj = run_simulation(in, pf);
  for (int i = 0; i < traj.num_steps(); i += 17) {
    const AdmittanceMatrix& Y = traj.admittance_at(i);
    Eigen::VectorXcd v(2);
    v << traj.V(i, 0), traj.V(i, 1);
    const Eigen::VectorXcd iv = Y.multiply(v);
    CHECK(std::abs(iv(0) - traj.I(i, 0)) < 1e-12);
    CHECK(std::abs(iv(1) - traj.I(i, 1)) < 1e-12);
  }
}

TEST_CASE("events fire at the first grid time at or after their schedule") {
  SimulationInput in = two_bus_input(1.0);
  in.events.push_back({0.4996, EventKind::LoadStep, 2, "", "", 0.1, 0.0, 0.0});
  const PowerFlowSolution pf = two_bus_pf(in.network);
  const Trajectory traj = run_simulation(in, pf);
  REQUIRE(traj.event_markers.size() == 1);
  const int step = traj.event_markers[0].first;
  CHECK(traj.t[step] == doctest::Approx(0.5).epsilon(1e-12));
  // the load step visibly moves the load-bus voltage
  CHECK(std::abs(traj.V(step + 50, 1)) != doctest::Approx(std::abs(traj.V(0, 1))).epsilon(1e-6));
}

TEST_CASE("a load outage removes the load from the algebraic system") {
  SimulationInput in = two_bus_input(2.0);
  in.events.push_back({0.5, EventKind::LoadOutage, 2, "", "", 0.0, 0.0, 0.0});
  const PowerFlowSolution pf = two_bus_pf(in.network);
  const Trajectory traj = run_simulation(in, pf);
  // after the transient decays the load bus injection goes to zero
  const int last = traj.num_steps() - 1;
  const Complex s_load = traj.V(last, 1) * std::conj(traj.I(last, 1));
  CHECK(std::abs(s_load) < 1e-5);
  // the event leaves the recorded (transmission-only) admittance unchanged
  CHECK(traj.epochs.size() == 1);
}

TEST_CASE("analytic voltage derivatives match finite differences") {
  SimulationInput in = two_bus_input(1.0);
  in.events.push_back({0.2, EventKind::LoadStep, 2, "", "", 0.2, 0.1, 0.0});
  const PowerFlowSolution pf = two_bus_pf(in.network);
  const Trajectory traj = run_simulation(in, pf);
  const double dt = traj.dt();
  const int ev_step = traj.event_markers.at(0).first;
  double max_rel = 0.0;
  for (int i = 1; i + 1 < traj.num_steps(); ++i) {
    if (std::abs(i - ev_step) <= 1) continue;  // discontinuity stencil
    for (int b = 0; b < traj.num_buses(); ++b) {
      const Complex fd = (traj.V(i + 1, b) - traj.V(i - 1, b)) / (2.0 * dt);
      const double denom = std::max(std::abs(traj.Vdot(i, b)), 1e-4);
      max_rel = std::max(max_rel, std::abs(fd - traj.Vdot(i, b)) / denom);
    }
  }
  CHECK(max_rel < 1e-3);
}

TEST_CASE("halving dt quarters the trajectory error") {
  // Richardson comparison on the post-event transient of the two-bus system.
  auto run_with_dt = [](double dt) {
    SimulationInput in = two_bus_input(1.0);
    in.config.dt = dt;
    in.events.push_back({0.2, EventKind::LoadStep, 2, "", "", 0.2, 0.1, 0.0});
    const PowerFlowSolution pf = two_bus_pf(in.network);
    return run_simulation(in, pf);
  };
  const Trajectory a = run_with_dt(4e-3);
  const Trajectory b = run_with_dt(2e-3);
  const Trajectory ref = run_with_dt(1e-3);
  // sup-norm of the state error over the transient, sampled on the coarsest
  // common grid; comparing against the h run the expected order-2 ratio is
  // (16 - 1) / (4 - 1) = 5
  auto sup_err = [&](const Trajectory& coarse, int stride_c, int stride_ref) {
    double m = 0.0;
    for (int i = 0; i * stride_c < coarse.num_steps() &&
                    i * stride_ref < ref.num_steps();
         ++i) {
      m = std::max(m, (coarse.states.row(i * stride_c) -
                       ref.states.row(i * stride_ref))
                          .norm());
    }
    return m;
  };
  const double e1 = sup_err(a, 1, 4);
  const double e2 = sup_err(b, 2, 4);
  const double ratio = e1 / e2;
  CHECK(ratio > 3.5);
  CHECK(ratio < 6.5);
}

TEST_CASE("setpoint steps excite the device") {
  SimulationInput in = two_bus_input(1.0);
  in.events.push_back(
      {0.3, EventKind::SetpointStep, 0, "g1", "p_ref", 0.0, 0.0, 0.1});
  const PowerFlowSolution pf = two_bus_pf(in.network);
  const Trajectory traj = run_simulation(in, pf);
  const int col = traj.state_index("g1.omega");
  REQUIRE(col >= 0);
  double max_dev = 0.0;
  for (int i = 0; i < traj.num_steps(); ++i) {
    max_dev = std::max(max_dev, std::abs(traj.states(i, col) - 1.0));
  }
  CHECK(max_dev > 1e-4);
}

TEST_CASE("trajectory csv export is stable and parseable") {
  SimulationInput in = two_bus_input(0.01);
  const PowerFlowSolution pf = two_bus_pf(in.network);
  const Trajectory traj = run_simulation(in, pf);
  std::ostringstream a, b;
  export_trajectory_csv(traj, a);
  export_trajectory_csv(traj, b);
  CHECK(a.str() == b.str());
  CHECK(a.str().substr(0, 2) == "t,");
  // one header plus one row per step
  int lines = 0;
  for (char ch : a.str()) lines += (ch == '\n');
  CHECK(lines == traj.num_steps() + 1);
}
