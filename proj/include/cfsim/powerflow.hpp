#pragma once

#include <vector>

#include "cfsim/netmodel.hpp"

namespace cfsim {

struct BusVoltage {
  double magnitude = 1.0;  // pu
  double angle = 0.0;      // rad

  Complex phasor() const { return std::polar(magnitude, angle); }
  static BusVoltage from_phasor(Complex v) { return {std::abs(v), std::arg(v)}; }
};

struct BusInjection {
  double p = 0.0;  // pu, loads negative
  double q = 0.0;

  Complex s() const { return {p, q}; }
};

struct BranchPowerTerm {
  int k = 0;       // far-end bus index
  double p_hk = 0.0;
  double q_hk = 0.0;

  Complex s() const { return {p_hk, q_hk}; }
};

enum class BusKind { Slack, PV, PQ };

// Per-bus solve specification, in network bus order.
struct BusSpec {
  BusKind kind = BusKind::PQ;
  double p_set = 0.0;  // net injection, pu (PQ, PV)
  double q_set = 0.0;  // net injection, pu (PQ)
  double v_set = 1.0;  // pu (slack, PV)
};

struct PowerFlowSolution {
  std::vector<BusVoltage> voltages;
  std::vector<BusInjection> injections;
  double mismatch_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Net complex power injected at every bus for the given voltage profile,
/// evaluated from the polar power flow equations.
std::vector<BusInjection> compute_injections(const AdmittanceMatrix& Y,
                                             const std::vector<BusVoltage>& V);

/// Per-far-end-bus power terms s_hk at bus h; structurally coupled buses
/// only (including h itself). Their sum equals the injection at h.
std::vector<BranchPowerTerm> branch_power_terms(const AdmittanceMatrix& Y,
                                                const std::vector<BusVoltage>& V,
                                                int h);

/// Newton-Raphson power flow from a flat start. Throws on a malformed spec;
/// non-convergence is reported through the returned solution.
PowerFlowSolution solve_power_flow(const Network& network,
                                   const AdmittanceMatrix& Y,
                                   const std::vector<BusSpec>& spec,
                                   double tol = 1e-8, int max_iter = 100);

}  // namespace cfsim
