#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "cfsim/devices.hpp"
#include "cfsim/netmodel.hpp"
#include "cfsim/powerflow.hpp"

namespace cfsim {

struct IntegratorConfig {
  double dt = 0.001;          // s
  double t_end = 1.0;         // s
  double newton_tol = 1e-9;
  int newton_max_iter = 20;
};

// Semi-explicit DAE: x' = f(x, y), 0 = g(x, y), with y the stacked
// rectangular bus voltages for the power-system model.
class DaeModel {
 public:
  virtual ~DaeModel() = default;
  virtual int num_states() const = 0;
  virtual int num_alg() const = 0;
  virtual void deriv(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     Eigen::VectorXd& f) const = 0;
  virtual void alg_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            Eigen::VectorXd& g) const = 0;
  // dg/dy and dg/dx; default is central finite differences.
  virtual void alg_jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                             Eigen::MatrixXd& dg_dy, Eigen::MatrixXd& dg_dx) const;
};

// Simultaneous implicit-trapezoidal stepper with Jacobian reuse. The
// iteration Jacobian is refreshed lazily; accuracy is governed only by the
// residual tolerance.
class TrapezoidalStepper {
 public:
  TrapezoidalStepper(const DaeModel& model, IntegratorConfig cfg);

  // Advances (x, y) over one step of size dt. Throws on Newton failure.
  void step(Eigen::VectorXd& x, Eigen::VectorXd& y, double dt);

  // Solves g(x, y) = 0 for y at frozen x (event re-solve).
  void solve_algebraic(const Eigen::VectorXd& x, Eigen::VectorXd& y);

  void invalidate_jacobian() { jac_valid_ = false; }

 private:
  bool newton(Eigen::VectorXd& x, Eigen::VectorXd& y, const Eigen::VectorXd& x0,
              const Eigen::VectorXd& f0, double dt, int max_iter);
  void build_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double dt);

  const DaeModel& model_;
  IntegratorConfig cfg_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  double jac_dt_ = -1.0;
  bool jac_valid_ = false;
  bool refresh_next_ = true;
};

struct DeviceMeta {
  std::string name;
  std::string kind;  // "gfm" | "gfl"
  int bus = 0;
  double inertia_h = 0.0;  // 0 for non-inertial devices
  int state_offset = 0;
  int num_states = 0;
};

struct YEpoch {
  int start_step = 0;
  AdmittanceMatrix Y;
};

// Full record of a simulation run: all bus phasors, net currents, their
// analytic time derivatives, and all device states at every step.
struct Trajectory {
  std::vector<double> t;
  std::vector<int> bus_ids;
  Eigen::MatrixXcd V;     // steps x n
  Eigen::MatrixXcd I;     // net injected current against the network admittance
  Eigen::MatrixXcd Vdot;  // analytic, empty if unavailable
  Eigen::MatrixXcd Idot;
  Eigen::MatrixXd states;  // steps x nx
  std::vector<std::string> state_names;
  std::vector<DeviceMeta> devices;
  std::vector<std::pair<int, std::string>> event_markers;  // (step, label)
  std::vector<std::pair<int, std::string>> guard_flags;    // (step, device)
  std::vector<YEpoch> epochs;
  double omega_base = 0.0;
  bool has_analytic = false;

  int num_steps() const { return static_cast<int>(t.size()); }
  int num_buses() const { return static_cast<int>(bus_ids.size()); }
  double dt() const { return t.size() > 1 ? t[1] - t[0] : 0.0; }
  const AdmittanceMatrix& admittance_at(int step) const;
  int state_index(const std::string& name) const;
};

// Devices coupled through the nodal current balance Y*V - I_inj(x, V) = 0.
// Constant-impedance loads are folded into Y.
class PowerSystemDae : public DaeModel {
 public:
  PowerSystemDae(Network network, std::vector<GfmVsm> gfm,
                 std::vector<GflConverter> gfl, std::vector<LoadModel> loads);

  int num_states() const override { return nx_; }
  int num_alg() const override { return 2 * n_; }
  void deriv(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
             Eigen::VectorXd& f) const override;
  void alg_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                    Eigen::VectorXd& g) const override;
  void alg_jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     Eigen::MatrixXd& dg_dy, Eigen::MatrixXd& dg_dx) const override;

  // Equilibrium initialization at a solved power flow; materializes device
  // references and load shunts. Throws if any device cannot be brought to
  // equilibrium (initial residual above tol).
  void initialize(const PowerFlowSolution& pf, double residual_tol = 1e-9);

  const Eigen::VectorXd& initial_states() const { return x0_; }
  const Eigen::VectorXd& initial_alg() const { return y0_; }

  // Returns true when Y was rebuilt.
  bool apply_event(const Event& ev);

  const AdmittanceMatrix& admittance() const { return Y_; }
  const Network& network() const { return net_; }
  std::vector<DeviceMeta> device_meta() const;
  std::vector<std::string> state_names() const;
  const std::vector<GfmVsm>& gfm() const { return gfm_; }
  const std::vector<GflConverter>& gfl() const { return gfl_; }

  Eigen::VectorXcd bus_voltages(const Eigen::VectorXd& y) const;
  Eigen::VectorXcd injected_currents(const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& y) const;
  std::vector<std::string> active_guards(const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& y) const;

  // Algebraic sensitivity: solves (dg/dy) ydot = -(dg/dx) f for ydot.
  Eigen::VectorXd voltage_derivatives(const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& y) const;

 private:
  void rebuild_admittance();

  Network net_;
  int n_ = 0;
  int nx_ = 0;
  std::vector<GfmVsm> gfm_;
  std::vector<GflConverter> gfl_;
  std::vector<LoadModel> loads_;
  std::vector<int> gfm_bus_, gfl_bus_;      // bus indices
  std::vector<int> gfm_off_, gfl_off_;      // state offsets
  AdmittanceMatrix Y_;
  Eigen::VectorXd x0_, y0_;
};

struct SimulationInput {
  Network network;
  std::vector<GfmVsm> gfm;
  std::vector<GflConverter> gfl;
  std::vector<LoadModel> loads;
  std::vector<Event> events;
  IntegratorConfig config;
};

/// Integrates the assembled system from the power-flow equilibrium, applying
/// events at the first grid time at or after their scheduled time. Throws on
/// Newton failure; the exception message carries the failure time.
Trajectory run_simulation(const SimulationInput& input, const PowerFlowSolution& pf);

/// Writes the full-precision trajectory CSV (one row per step).
void export_trajectory_csv(const Trajectory& traj, std::ostream& os);

}  // namespace cfsim
