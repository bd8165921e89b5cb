#include "cfsim/powerflow.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace cfsim {

std::vector<BusInjection> compute_injections(const AdmittanceMatrix& Y,
                                             const std::vector<BusVoltage>& V) {
  const int n = Y.dimension();
  if (static_cast<int>(V.size()) != n) {
    throw std::invalid_argument("compute_injections: dimension mismatch");
  }
  std::vector<BusInjection> out(n);
  const auto& mat = Y.sparse();
  for (int h = 0; h < n; ++h) {
    double p = 0.0, q = 0.0;
    for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(mat, h); it; ++it) {
      const int k = static_cast<int>(it.col());
      const double g = it.value().real();
      const double b = it.value().imag();
      const double thk = V[h].angle - V[k].angle;
      const double vv = V[h].magnitude * V[k].magnitude;
      p += vv * (g * std::cos(thk) + b * std::sin(thk));
      q += vv * (g * std::sin(thk) - b * std::cos(thk));
    }
    out[h] = {p, q};
  }
  return out;
}

std::vector<BranchPowerTerm> branch_power_terms(const AdmittanceMatrix& Y,
                                                const std::vector<BusVoltage>& V,
                                                int h) {
  const int n = Y.dimension();
  if (h < 0 || h >= n) throw std::invalid_argument("branch_power_terms: bad bus index");
  std::vector<BranchPowerTerm> out;
  const auto& mat = Y.sparse();
  for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(mat, h); it; ++it) {
    const int k = static_cast<int>(it.col());
    const double g = it.value().real();
    const double b = it.value().imag();
    const double thk = V[h].angle - V[k].angle;
    const double vv = V[h].magnitude * V[k].magnitude;
    out.push_back({k, vv * (g * std::cos(thk) + b * std::sin(thk)),
                   vv * (g * std::sin(thk) - b * std::cos(thk))});
  }
  return out;
}

namespace {

PowerFlowSolution solve_newton(const Network& network,
                               const AdmittanceMatrix& Y,
                               const std::vector<BusSpec>& spec,
                               double tol, int max_iter,
                               const std::vector<BusVoltage>* warm_start) {
  const int n = network.size();
  if (static_cast<int>(spec.size()) != n) {
    throw std::invalid_argument("solve_power_flow: spec must cover all buses");
  }
  int n_slack = 0;
  for (const BusSpec& s : spec) {
    if (s.kind == BusKind::Slack) ++n_slack;
  }
  if (n_slack != 1) {
    throw std::invalid_argument("solve_power_flow: exactly one slack bus required");
  }

  // Unknown layout: angles for non-slack buses, then magnitudes for PQ buses.
  std::vector<int> ang_of(n, -1), mag_of(n, -1);
  int m = 0;
  for (int i = 0; i < n; ++i) {
    if (spec[i].kind != BusKind::Slack) ang_of[i] = m++;
  }
  for (int i = 0; i < n; ++i) {
    if (spec[i].kind == BusKind::PQ) mag_of[i] = m++;
  }

  // Flat start unless a warm start is supplied; slack and PV magnitudes are
  // pinned to their setpoints either way.
  std::vector<BusVoltage> V(n);
  for (int i = 0; i < n; ++i) {
    if (warm_start != nullptr) {
      V[i] = (*warm_start)[i];
      if (spec[i].kind != BusKind::PQ) V[i].magnitude = spec[i].v_set;
    } else {
      V[i].magnitude = (spec[i].kind == BusKind::PQ) ? 1.0 : spec[i].v_set;
      V[i].angle = 0.0;
    }
  }

  PowerFlowSolution sol;
  const auto& mat = Y.sparse();

  auto mismatch = [&](Eigen::VectorXd& r) {
    auto inj = compute_injections(Y, V);
    for (int i = 0; i < n; ++i) {
      if (ang_of[i] >= 0) r(ang_of[i]) = inj[i].p - spec[i].p_set;
      if (mag_of[i] >= 0) r(mag_of[i]) = inj[i].q - spec[i].q_set;
    }
    return inj;
  };

  Eigen::VectorXd r(m);
  for (int iter = 0; iter <= max_iter; ++iter) {
    auto inj = mismatch(r);
    sol.mismatch_norm = (m > 0) ? r.lpNorm<Eigen::Infinity>() : 0.0;
    sol.iterations = iter;
    if (sol.mismatch_norm < tol) {
      sol.converged = true;
      sol.voltages = V;
      sol.injections = inj;
      return sol;
    }
    if (iter == max_iter) break;

    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
    for (int h = 0; h < n; ++h) {
      const double vh = V[h].magnitude;
      for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(mat, h); it; ++it) {
        const int k = static_cast<int>(it.col());
        const double g = it.value().real();
        const double b = it.value().imag();
        const double thk = V[h].angle - V[k].angle;
        const double vk = V[k].magnitude;
        const double phk = vh * vk * (g * std::cos(thk) + b * std::sin(thk));
        const double qhk = vh * vk * (g * std::sin(thk) - b * std::cos(thk));
        if (k != h) {
          if (ang_of[h] >= 0 && ang_of[k] >= 0) {
            J(ang_of[h], ang_of[k]) = qhk;
            if (mag_of[h] >= 0) J(mag_of[h], ang_of[k]) = -phk;
          }
          if (ang_of[h] >= 0 && mag_of[k] >= 0) J(ang_of[h], mag_of[k]) = phk / vk;
          if (mag_of[h] >= 0 && mag_of[k] >= 0) J(mag_of[h], mag_of[k]) = qhk / vk;
        }
      }
      const double gh = Y(h, h).real();
      const double bh = Y(h, h).imag();
      if (ang_of[h] >= 0) {
        J(ang_of[h], ang_of[h]) = -inj[h].q - bh * vh * vh;
        if (mag_of[h] >= 0) {
          J(ang_of[h], mag_of[h]) = inj[h].p / vh + gh * vh;
          J(mag_of[h], ang_of[h]) = inj[h].p - gh * vh * vh;
          J(mag_of[h], mag_of[h]) = inj[h].q / vh - bh * vh;
        }
      }
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    Eigen::VectorXd dx = lu.solve(r);
    if (!dx.allFinite()) {
      sol.converged = false;
      sol.voltages = V;
      sol.injections = inj;
      throw std::runtime_error("solve_power_flow: singular Jacobian at iteration " +
                               std::to_string(iter));
    }
    // Damped update: halve the step while the mismatch norm fails to drop,
    // which carries flat starts through heavily loaded / resistive cases.
    const std::vector<BusVoltage> V_prev = V;
    const double norm_prev = sol.mismatch_norm;
    double alpha = 1.0;
    for (int cut = 0; cut < 12; ++cut) {
      for (int i = 0; i < n; ++i) {
        if (ang_of[i] >= 0) V[i].angle = V_prev[i].angle - alpha * dx(ang_of[i]);
        if (mag_of[i] >= 0) {
          V[i].magnitude = std::max(V_prev[i].magnitude - alpha * dx(mag_of[i]), 0.05);
        }
      }
      mismatch(r);
      if (r.lpNorm<Eigen::Infinity>() < norm_prev) break;
      alpha *= 0.5;
    }
  }

  sol.converged = false;
  sol.voltages = V;
  sol.injections = compute_injections(Y, V);
  return sol;
}

}  // namespace

PowerFlowSolution solve_power_flow(const Network& network,
                                   const AdmittanceMatrix& Y,
                                   const std::vector<BusSpec>& spec,
                                   double tol, int max_iter) {
  PowerFlowSolution sol = solve_newton(network, Y, spec, tol, max_iter, nullptr);
  if (sol.converged) return sol;

  // Flat start can stall on heavily loaded or very resistive networks. Ramp
  // the injections up adaptively, warm-starting each stage from the last:
  // advance while stages converge, halve the increment when one does not.
  std::vector<BusVoltage> V;
  double lambda = 0.0, step = 0.25;
  while (lambda < 1.0) {
    const double next = std::min(lambda + step, 1.0);
    std::vector<BusSpec> scaled = spec;
    for (BusSpec& s : scaled) {
      s.p_set *= next;
      s.q_set *= next;
    }
    PowerFlowSolution stage = solve_newton(network, Y, scaled, tol, max_iter,
                                           V.empty() ? nullptr : &V);
    if (stage.converged) {
      lambda = next;
      V = stage.voltages;
      sol = stage;
      step = std::min(step * 2.0, 0.25);
    } else {
      step *= 0.5;
      if (step < 1e-3) return stage;  // loadability limit: report the stall
    }
  }
  return sol;
}

}  // namespace cfsim
