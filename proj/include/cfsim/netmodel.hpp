#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace cfsim {

using Complex = std::complex<double>;

struct Bus {
  int id = 0;  // unique within a Network
  std::string name;
  double base_kv = 0.0;
  double shunt_g = 0.0;  // pu
  double shunt_b = 0.0;  // pu
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double resistance_r = 0.0;  // pu series
  double reactance_x = 0.0;   // pu series
  double charging_b = 0.0;    // pu total line charging
  double tap_ratio = 1.0;     // 1.0 for plain lines
  bool in_service = true;

  Complex series_impedance() const { return {resistance_r, reactance_x}; }
};

// Immutable per-unit network description. Bus order defines matrix order.
struct Network {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  double base_mva = 100.0;
  double base_frequency = 60.0;  // Hz

  int size() const { return static_cast<int>(buses.size()); }
  double omega_base() const;  // rad/s

  // Index of bus id in the bus list, -1 if absent.
  int bus_index(int bus_id) const;
};

// Nodal admittance matrix Y with deterministic (row, column) ordering.
class AdmittanceMatrix {
 public:
  AdmittanceMatrix() = default;
  AdmittanceMatrix(int n, std::vector<Eigen::Triplet<Complex>> entries);

  int dimension() const { return n_; }
  Complex operator()(int row, int col) const { return mat_.coeff(row, col); }
  const Eigen::SparseMatrix<Complex, Eigen::RowMajor>& sparse() const { return mat_; }

  Eigen::VectorXcd multiply(const Eigen::VectorXcd& v) const { return mat_ * v; }
  Complex row_sum(int row) const;

  // Sorted (row, col) positions of structural nonzeros.
  std::vector<std::pair<int, int>> pattern() const;

 private:
  int n_ = 0;
  Eigen::SparseMatrix<Complex, Eigen::RowMajor> mat_;
};

struct Violation {
  std::string entity;  // e.g. "branch 3-3" or "bus 7"
  std::string rule;
};

/// Builds the nodal admittance matrix with the standard pi branch model
/// (half charging at each end, tap on the from side). Out-of-service
/// branches are skipped. Throws on a zero series impedance.
AdmittanceMatrix build_admittance(const Network& network);

/// Returns a copy of the network with every branch series impedance rotated
/// to the requested R/X ratio while keeping |z| unchanged. Transformers
/// (tap != 1) are included unless include_transformers is false.
Network set_rx_ratio(const Network& network, double ratio,
                     bool include_transformers = true);

/// Structural checks: unique bus ids, positive bases, sane branches,
/// connectivity over in-service branches. Violations are data, not errors.
std::vector<Violation> validate(const Network& network);

}  // namespace cfsim
