#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "cfsim/cfmetrics.hpp"
#include "cfsim/netmodel.hpp"

using namespace cfsim;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Complex> sample(double dt, int n,
                            const std::function<Complex(double)>& f) {
  std::vector<Complex> out(n);
  for (int i = 0; i < n; ++i) out[i] = f(i * dt);
  return out;
}

// Synthetic trajectory over a given network: bus voltages from the supplied
// generators, currents taken as Y*V so every sample is network-consistent.
Trajectory make_traj(const Network& net, double dt, int n,
                     const std::vector<std::function<Complex(double)>>& v,
                     const std::vector<std::function<Complex(double)>>& vdot) {
  const int nb = net.size();
  Trajectory traj;
  traj.omega_base = net.omega_base();
  traj.has_analytic = true;
  traj.t.resize(n);
  for (const Bus& b : net.buses) traj.bus_ids.push_back(b.id);
  traj.V.resize(n, nb);
  traj.I.resize(n, nb);
  traj.Vdot.resize(n, nb);
  traj.Idot.resize(n, nb);
  traj.epochs.push_back({0, build_admittance(net)});
  const AdmittanceMatrix& Y = traj.epochs[0].Y;
  Eigen::VectorXcd vv(nb), vd(nb);
  for (int i = 0; i < n; ++i) {
    traj.t[i] = i * dt;
    for (int b = 0; b < nb; ++b) {
      vv(b) = v[b](traj.t[i]);
      vd(b) = vdot[b](traj.t[i]);
    }
    const Eigen::VectorXcd ii = Y.multiply(vv);
    const Eigen::VectorXcd id = Y.multiply(vd);
    for (int b = 0; b < nb; ++b) {
      traj.V(i, b) = vv(b);
      traj.I(i, b) = ii(b);
      traj.Vdot(i, b) = vd(b);
      traj.Idot(i, b) = id(b);
    }
  }
  return traj;
}

Network two_bus_line() {
  Network net;
  net.buses = {{1, "a", 345.0, 0.0, 0.0}, {2, "b", 345.0, 0.0, 0.0}};
  Branch br;
  br.from_bus = 1;
  br.to_bus = 2;
  br.resistance_r = 0.01;
  br.reactance_x = 0.1;
  net.branches = {br};
  return net;
}

double max_abs_imag(const std::vector<Complex>& x) {
  double m = 0.0;
  for (const Complex& v : x) {
    if (is_defined(v)) m = std::max(m, std::abs(v.imag()));
  }
  return m;
}

}  // namespace

TEST_CASE("complex frequency of a constant signal is zero") {
  const auto x = sample(1e-3, 100, [](double) { return Complex{0.7, 0.3}; });
  const auto xd = sample(1e-3, 100, [](double) { return Complex{0.0, 0.0}; });
  for (const Complex& e : complex_frequency_of_signal(
           x, 1e-3, DerivativeMode::Analytic, &xd)) {
    CHECK(std::abs(e) < 1e-15);
  }
  for (const Complex& e :
       complex_frequency_of_signal(x, 1e-3, DerivativeMode::CentralDifference)) {
    CHECK(std::abs(e) < 1e-10);
  }
}

TEST_CASE("pure exponential recovers its exponent") {
  const Complex lam{-0.5, 2.0 * kPi};
  const double dt = 1e-3;
  const auto x = sample(dt, 2000, [&](double t) { return std::exp(lam * t); });
  const auto xd =
      sample(dt, 2000, [&](double t) { return lam * std::exp(lam * t); });

  for (const Complex& e :
       complex_frequency_of_signal(x, dt, DerivativeMode::Analytic, &xd)) {
    CHECK(std::abs(e - lam) / std::abs(lam) < 1e-14);
  }
  // Log-magnitude and unwrapped phase are both linear in t, so the
  // second-order differences are exact up to roundoff here too.
  for (const Complex& e : complex_frequency_of_signal(
           x, dt, DerivativeMode::CentralDifference)) {
    CHECK(std::abs(e - lam) / std::abs(lam) < 1e-9);
  }
}

TEST_CASE("fast exponentials within the advertised envelope") {
  // |lambda| <= 10 at dt = 1 ms, relative error < 1e-5 in difference mode.
  for (const Complex lam : {Complex{-10.0, 0.0}, Complex{0.0, 10.0},
                            Complex{-7.0, 7.0}, Complex{3.0, -9.0}}) {
    const double dt = 1e-3;
    const auto x = sample(dt, 500, [&](double t) { return std::exp(lam * t); });
    const auto eta =
        complex_frequency_of_signal(x, dt, DerivativeMode::CentralDifference);
    for (const Complex& e : eta) {
      CHECK(std::abs(e - lam) / std::abs(lam) < 1e-5);
    }
  }
}

TEST_CASE("chirp signal and second-order convergence") {
  // x = (1 + 0.1 t) exp(j pi t^2): rho = 0.1/(1+0.1t), omega = 2 pi t.
  auto gen = [](double t) {
    return (1.0 + 0.1 * t) * std::polar(1.0, kPi * t * t);
  };
  auto exact = [](double t) {
    return Complex{0.1 / (1.0 + 0.1 * t), 2.0 * kPi * t};
  };
  auto max_err = [&](double dt) {
    const int n = static_cast<int>(std::round(2.0 / dt)) + 1;
    const auto eta = complex_frequency_of_signal(
        sample(dt, n, gen), dt, DerivativeMode::CentralDifference);
    double m = 0.0;
    // interior points only: the one-sided end stencils carry a larger constant
    for (int i = 1; i + 1 < n; ++i) m = std::max(m, std::abs(eta[i] - exact(i * dt)));
    return m;
  };
  const double e1 = max_err(2e-3);
  const double e2 = max_err(1e-3);
  CHECK(e1 / e2 > 3.5);
  CHECK(e1 / e2 < 4.5);
  CHECK(e2 < 1e-4);
}

TEST_CASE("magnitude floor yields undefined samples") {
  auto x = sample(1e-3, 10, [](double) { return Complex{1.0, 0.0}; });
  x[4] = Complex{1e-9, 0.0};
  const auto eta =
      complex_frequency_of_signal(x, 1e-3, DerivativeMode::CentralDifference);
  CHECK(!is_defined(eta[4]));
  // neighbours share a stencil with the bad sample
  CHECK(!is_defined(eta[3]));
  CHECK(!is_defined(eta[5]));
  CHECK(is_defined(eta[1]));
}

TEST_CASE("analytic mode without derivatives is rejected") {
  const auto x = sample(1e-3, 10, [](double) { return Complex{1.0, 0.0}; });
  CHECK_THROWS_AS(complex_frequency_of_signal(x, 1e-3, DerivativeMode::Analytic),
                  std::invalid_argument);
}

TEST_CASE("angle unwrapping removes 2-pi jumps") {
  std::vector<double> theta;
  for (int i = 0; i < 100; ++i) {
    double a = 0.2 * i;
    theta.push_back(std::atan2(std::sin(a), std::cos(a)));  // wrapped
  }
  const auto un = unwrap_angles(theta);
  for (int i = 0; i < 100; ++i) {
    CHECK(un[i] == doctest::Approx(0.2 * i).epsilon(1e-12));
  }
}

TEST_CASE("loss series equals the hand sum of v conj(i)") {
  const Network net = two_bus_line();
  const Complex a{1.02, 0.05}, b{0.98, -0.02};
  const Trajectory traj = make_traj(
      net, 1e-3, 5,
      {[&](double) { return a; }, [&](double) { return b; }},
      {[](double) { return Complex{}; }, [](double) { return Complex{}; }});
  const LossSeries ls = loss_series(traj);
  const Complex expected = a * std::conj(traj.I(0, 0)) + b * std::conj(traj.I(0, 1));
  for (int i = 0; i < 5; ++i) {
    CHECK(std::abs(ls.s_l[i] - expected) < 1e-14);
    CHECK(ls.magnitude[i] == doctest::Approx(std::abs(expected)).epsilon(1e-14));
  }
  // losses across a passive branch have positive real part
  CHECK(expected.real() > 0.0);
}

TEST_CASE("loss complex frequency of an exponentially scaling run") {
  // V(t) = e^{mu t} V0 makes s_l scale as e^{2 Re(mu) t + ...}: with a common
  // complex exponent mu on all buses, s_l = e^{(mu + conj(mu)) t} s_l(0)
  // so eta_sl = 2 Re(mu) exactly.
  const Network net = two_bus_line();
  const Complex mu{-0.2, 0.5};
  const Complex a{1.02, 0.05}, b{0.98, -0.02};
  auto mk = [&](Complex v0) {
    return [=](double t) { return v0 * std::exp(mu * t); };
  };
  auto mkd = [&](Complex v0) {
    return [=](double t) { return mu * v0 * std::exp(mu * t); };
  };
  const Trajectory traj =
      make_traj(net, 1e-3, 200, {mk(a), mk(b)}, {mkd(a), mkd(b)});
  MetricOptions opt;
  for (const Complex& e : loss_cf(traj, opt)) {
    CHECK(std::abs(e - Complex{2.0 * mu.real(), 0.0}) < 1e-12);
  }
}

TEST_CASE("all components vanish on a steady trajectory") {
  const Network net = two_bus_line();
  const Trajectory traj = make_traj(
      net, 1e-3, 50,
      {[](double) { return Complex{1.02, 0.05}; },
       [](double) { return Complex{0.98, -0.02}; }},
      {[](double) { return Complex{}; }, [](double) { return Complex{}; }});
  MetricOptions opt;
  const auto d = decompose(traj, opt);
  for (int i = 0; i < 50; ++i) {
    CHECK(std::abs(d.eta_sl[i]) < 1e-13);
    CHECK(std::abs(d.eta_v_sys[i]) < 1e-13);
    CHECK(std::abs(d.eta_i_sys[i]) < 1e-13);
  }
}

TEST_CASE("uniform rotation: both components see the frequency offset") {
  // Every phasor rotates at a common extra frequency; the weights are
  // constant and both system components must equal j*domega while the
  // losses stay constant in magnitude (their cf is zero).
  const Network net = two_bus_line();
  const double domega = 2.0 * kPi * 0.5;
  const Complex jw{0.0, domega};
  const Complex a{1.02, 0.05}, b{0.98, -0.02};
  auto mk = [&](Complex v0) {
    return [=](double t) { return v0 * std::exp(jw * t); };
  };
  auto mkd = [&](Complex v0) {
    return [=](double t) { return jw * v0 * std::exp(jw * t); };
  };
  const Trajectory traj =
      make_traj(net, 1e-3, 100, {mk(a), mk(b)}, {mkd(a), mkd(b)});
  MetricOptions opt;
  const auto ev = weighted_voltage_component(traj, opt);
  const auto ei = weighted_current_component(traj, opt);
  const auto esl = loss_cf(traj, opt);
  for (int i = 0; i < 100; ++i) {
    CHECK(std::abs(ev[i] - jw) < 1e-11);
    CHECK(std::abs(ei[i] - jw) < 1e-11);
    CHECK(std::abs(esl[i]) < 1e-11);
    // decomposition: eta_sl = eta_v + conj(eta_i) = jw - jw = 0
    CHECK(std::abs(ev[i] + std::conj(ei[i]) - esl[i]) < 1e-11);
  }
}

TEST_CASE("decomposition identity holds on a heterogeneous trajectory") {
  const Network net = two_bus_line();
  const Complex m1{-0.3, 1.7}, m2{0.1, -0.9};
  auto mk = [](Complex v0, Complex mu) {
    return [=](double t) { return v0 * std::exp(mu * t); };
  };
  auto mkd = [](Complex v0, Complex mu) {
    return [=](double t) { return mu * v0 * std::exp(mu * t); };
  };
  const Trajectory traj = make_traj(
      net, 1e-3, 300,
      {mk({1.02, 0.05}, m1), mk({0.98, -0.02}, m2)},
      {mkd({1.02, 0.05}, m1), mkd({0.98, -0.02}, m2)});
  MetricOptions opt;
  const auto d = decompose(traj, opt);
  for (int i = 0; i < 300; ++i) {
    REQUIRE(std::isfinite(d.decomp_residual[i]));
    CHECK(d.decomp_residual[i] < 1e-12);
  }
}

TEST_CASE("per-bus identities are exact for network-consistent phasors") {
  const Network net = two_bus_line();
  const Complex m1{-0.3, 1.7}, m2{0.1, -0.9};
  auto mk = [](Complex v0, Complex mu) {
    return [=](double t) { return v0 * std::exp(mu * t); };
  };
  auto mkd = [](Complex v0, Complex mu) {
    return [=](double t) { return mu * v0 * std::exp(mu * t); };
  };
  const Trajectory traj = make_traj(
      net, 1e-3, 100,
      {mk({1.02, 0.05}, m1), mk({0.9, -0.3}, m2)},
      {mkd({1.02, 0.05}, m1), mkd({0.9, -0.3}, m2)});
  MetricOptions opt;
  const IdentityReport rep = per_bus_identities(traj, opt);
  CHECK(rep.bus_ids.size() == 2);
  CHECK(rep.max_rate < 1e-12);
  CHECK(rep.max_coupling < 1e-12);
}

TEST_CASE("per-bus identities without admittance data are rejected") {
  Trajectory traj;
  traj.t = {0.0, 1e-3};
  traj.bus_ids = {1};
  traj.V.setOnes(2, 1);
  traj.I.setOnes(2, 1);
  MetricOptions opt;
  opt.mode = DerivativeMode::CentralDifference;
  CHECK_THROWS_AS(per_bus_identities(traj, opt), std::invalid_argument);
}

TEST_CASE("real-only trajectories have exactly real metrics") {
  // All phasors real and positive: there is no rotation anywhere, so every
  // frequency (imaginary) part must vanish identically.
  Network net = two_bus_line();
  net.branches[0].reactance_x = 0.0;  // resistive line
  net.branches[0].resistance_r = 0.05;
  auto mk = [](double v0, double rate) {
    return [=](double t) { return Complex{v0 * std::exp(rate * t), 0.0}; };
  };
  auto mkd = [](double v0, double rate) {
    return [=](double t) {
      return Complex{rate * v0 * std::exp(rate * t), 0.0};
    };
  };
  const Trajectory traj = make_traj(net, 1e-3, 100,
                                    {mk(1.0, -0.1), mk(0.9, 0.2)},
                                    {mkd(1.0, -0.1), mkd(0.9, 0.2)});
  MetricOptions opt;
  const auto d = decompose(traj, opt);
  CHECK(max_abs_imag(d.eta_sl) < 1e-12);
  CHECK(max_abs_imag(d.eta_v_sys) < 1e-12);
  CHECK(max_abs_imag(d.eta_i_sys) < 1e-12);
}

TEST_CASE("zero-injection buses are excluded by zero weight") {
  // Three-bus chain where the middle bus floats with no injection: the
  // weighted components must still be defined everywhere.
  Network net;
  net.buses = {{1, "a", 345.0, 0.0, 0.0},
               {2, "m", 345.0, 0.0, 0.0},
               {3, "b", 345.0, 0.0, 0.0}};
  Branch b1, b2;
  b1.from_bus = 1; b1.to_bus = 2; b1.resistance_r = 0.0; b1.reactance_x = 0.1;
  b2.from_bus = 2; b2.to_bus = 3; b2.resistance_r = 0.0; b2.reactance_x = 0.1;
  net.branches = {b1, b2};
  // Voltage profile linear along the chain makes the centre injection zero:
  // v2 = (v1 + v3) / 2 with equal reactances.
  const Complex v1{1.0, 0.1}, v3{0.9, -0.1};
  const Complex v2 = 0.5 * (v1 + v3);
  const Complex mu{0.0, 1.0};
  auto mk = [&](Complex v0) {
    return [=](double t) { return v0 * std::exp(mu * t); };
  };
  auto mkd = [&](Complex v0) {
    return [=](double t) { return mu * v0 * std::exp(mu * t); };
  };
  const Trajectory traj =
      make_traj(net, 1e-3, 50, {mk(v1), mk(v2), mk(v3)},
                {mkd(v1), mkd(v2), mkd(v3)});
  MetricOptions opt;
  const auto ev = weighted_voltage_component(traj, opt);
  for (const Complex& e : ev) CHECK(is_defined(e));
  const IdentityReport rep = per_bus_identities(traj, opt);
  CHECK(rep.excluded_buses == std::vector<int>{2});
}

TEST_CASE("center-of-inertia frequency weights by inertia") {
  Trajectory traj;
  traj.t = {0.0, 1e-3, 2e-3};
  traj.bus_ids = {1};
  traj.states.resize(3, 6);
  traj.states.setZero();
  DeviceMeta d1{"g1", "gfm", 1, 2.0, 0, 3};
  DeviceMeta d2{"g2", "gfm", 1, 2.0, 3, 3};
  traj.devices = {d1, d2};
  traj.state_names = {"g1.delta", "g1.omega", "g1.emf",
                      "g2.delta", "g2.omega", "g2.emf"};
  for (int i = 0; i < 3; ++i) {
    traj.states(i, 1) = 1.00;
    traj.states(i, 4) = 0.99;
  }
  const auto coi = coi_frequency(traj);
  REQUIRE(coi.size() == 3);
  CHECK(coi[0] == doctest::Approx(0.995).epsilon(1e-14));

  // unequal inertia shifts the mean toward the heavy machine
  traj.devices[0].inertia_h = 3.0;
  traj.devices[1].inertia_h = 1.0;
  const auto coi2 = coi_frequency(traj);
  CHECK(coi2[0] == doctest::Approx((3.0 * 1.00 + 1.0 * 0.99) / 4.0).epsilon(1e-14));

  // explicit device list overload agrees
  GfmVsm g1, g2;
  g1.name = "g1"; g1.inertia_h = 3.0;
  g2.name = "g2"; g2.inertia_h = 1.0;
  const auto coi3 = coi_frequency(traj, {g1, g2});
  CHECK(coi3[0] == doctest::Approx(coi2[0]).epsilon(1e-14));
}

TEST_CASE("coi frequency is empty without inertial devices") {
  Trajectory traj;
  traj.t = {0.0};
  CHECK(coi_frequency(traj).empty());
}

TEST_CASE("rocof of a linear ramp is its slope") {
  std::vector<double> t, y;
  for (int i = 0; i <= 2000; ++i) {
    t.push_back(i * 1e-3);
    y.push_back(1.0 + 0.42 * t.back());
  }
  CHECK(rocof_at(t, y, 1.0, 0.5, 0.1) == doctest::Approx(0.42).epsilon(1e-10));
  CHECK(rocof_at(t, y, 1.0, 0.5, 0.4) == doctest::Approx(0.42).epsilon(1e-10));
}

TEST_CASE("rocof of a constant is zero and bad windows throw") {
  std::vector<double> t, y;
  for (int i = 0; i <= 100; ++i) {
    t.push_back(i * 1e-2);
    y.push_back(0.77);
  }
  CHECK(rocof_at(t, y, 0.0, 0.5, 0.1) == doctest::Approx(0.0));
  CHECK_THROWS_AS(rocof_at(t, y, 0.9, 0.5, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(rocof_at({}, {}, 0.0), std::invalid_argument);
}
