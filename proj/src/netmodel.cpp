#include "cfsim/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <stdexcept>
#include <unordered_map>

namespace cfsim {

double Network::omega_base() const {
  return 2.0 * std::numbers::pi * base_frequency;
}

int Network::bus_index(int bus_id) const {
  for (int i = 0; i < size(); ++i) {
    if (buses[i].id == bus_id) return i;
  }
  return -1;
}

AdmittanceMatrix::AdmittanceMatrix(int n,
                                   std::vector<Eigen::Triplet<Complex>> entries)
    : n_(n), mat_(n, n) {
  mat_.setFromTriplets(entries.begin(), entries.end());
  mat_.makeCompressed();
}

Complex AdmittanceMatrix::row_sum(int row) const {
  Complex sum = 0.0;
  for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(mat_, row); it; ++it) {
    sum += it.value();
  }
  return sum;
}

std::vector<std::pair<int, int>> AdmittanceMatrix::pattern() const {
  std::vector<std::pair<int, int>> out;
  for (int r = 0; r < n_; ++r) {
    for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(mat_, r); it; ++it) {
      out.emplace_back(r, static_cast<int>(it.col()));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

AdmittanceMatrix build_admittance(const Network& network) {
  const int n = network.size();
  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(4 * network.branches.size() + n);

  for (const Branch& br : network.branches) {
    if (!br.in_service) continue;
    const Complex z = br.series_impedance();
    if (z == Complex{0.0, 0.0}) {
      throw std::invalid_argument("branch " + std::to_string(br.from_bus) + "-" +
                                  std::to_string(br.to_bus) +
                                  ": zero series impedance on in-service branch");
    }
    const int f = network.bus_index(br.from_bus);
    const int t = network.bus_index(br.to_bus);
    if (f < 0 || t < 0) {
      throw std::invalid_argument("branch references unknown bus");
    }
    const Complex y = 1.0 / z;
    const Complex ysh{0.0, br.charging_b / 2.0};
    const double a = br.tap_ratio;
    trip.emplace_back(f, f, (y + ysh) / (a * a));
    trip.emplace_back(t, t, y + ysh);
    trip.emplace_back(f, t, -y / a);
    trip.emplace_back(t, f, -y / a);
  }
  for (int i = 0; i < n; ++i) {
    const Bus& b = network.buses[i];
    if (b.shunt_g != 0.0 || b.shunt_b != 0.0) {
      trip.emplace_back(i, i, Complex{b.shunt_g, b.shunt_b});
    }
  }
  return AdmittanceMatrix(n, std::move(trip));
}

Network set_rx_ratio(const Network& network, double ratio,
                     bool include_transformers) {
  if (!(ratio > 0.0)) {
    throw std::invalid_argument("set_rx_ratio: ratio must be positive");
  }
  Network out = network;
  const double scale = 1.0 / std::sqrt(1.0 + ratio * ratio);
  for (Branch& br : out.branches) {
    if (!include_transformers && br.tap_ratio != 1.0) continue;
    const double zmag = std::abs(br.series_impedance());
    br.reactance_x = zmag * scale;
    br.resistance_r = zmag * ratio * scale;
  }
  return out;
}

namespace {

void add_violation(std::vector<Violation>& v, std::string entity, std::string rule) {
  v.push_back({std::move(entity), std::move(rule)});
}

}  // namespace

std::vector<Violation> validate(const Network& network) {
  std::vector<Violation> out;
  const int n = network.size();

  if (network.base_mva <= 0.0) add_violation(out, "network", "base_mva must be positive");
  if (network.base_frequency <= 0.0) add_violation(out, "network", "base_frequency must be positive");
  if (n == 0) add_violation(out, "network", "no buses");

  std::unordered_map<int, int> id_count;
  for (const Bus& b : network.buses) {
    ++id_count[b.id];
    if (b.base_kv <= 0.0) {
      add_violation(out, "bus " + std::to_string(b.id), "base_kv must be positive");
    }
  }
  for (const auto& [id, count] : id_count) {
    if (count > 1) {
      add_violation(out, "bus " + std::to_string(id), "duplicate bus id");
    }
  }

  for (const Branch& br : network.branches) {
    const std::string ent = "branch " + std::to_string(br.from_bus) + "-" +
                            std::to_string(br.to_bus);
    if (br.from_bus == br.to_bus) add_violation(out, ent, "from_bus equals to_bus");
    if (br.resistance_r == 0.0 && br.reactance_x == 0.0) {
      add_violation(out, ent, "zero series impedance");
    }
    if (!(br.tap_ratio > 0.0)) add_violation(out, ent, "tap_ratio must be positive");
    if (network.bus_index(br.from_bus) < 0) add_violation(out, ent, "unknown from_bus");
    if (network.bus_index(br.to_bus) < 0) add_violation(out, ent, "unknown to_bus");
  }

  // Connectivity over in-service branches, BFS from the first bus.
  if (n > 0) {
    std::vector<std::vector<int>> adj(n);
    for (const Branch& br : network.branches) {
      if (!br.in_service) continue;
      const int f = network.bus_index(br.from_bus);
      const int t = network.bus_index(br.to_bus);
      if (f < 0 || t < 0) continue;
      adj[f].push_back(t);
      adj[t].push_back(f);
    }
    std::vector<bool> seen(n, false);
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int w : adj[u]) {
        if (!seen[w]) {
          seen[w] = true;
          q.push(w);
        }
      }
    }
    std::string unreachable;
    for (int i = 0; i < n; ++i) {
      if (!seen[i]) {
        if (!unreachable.empty()) unreachable += ",";
        unreachable += std::to_string(network.buses[i].id);
      }
    }
    if (!unreachable.empty()) {
      add_violation(out, "buses " + unreachable, "unreachable over in-service branches");
    }
  }
  return out;
}

}  // namespace cfsim
