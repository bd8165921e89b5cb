#include "cfsim/ieee39.hpp"

namespace cfsim {

namespace {

struct LoadRow {
  int bus;
  double p_mw, q_mvar;
};
struct BranchRow {
  int from, to;
  double r, x, b, tap;
};
struct GenRow {
  int bus;
  double p_mw;   // dispatch; ignored at the slack
  double v_set;  // pu
};

// New England 39-bus test system, 100 MVA base.
const LoadRow kLoads[] = {
    {1, 97.6, 44.2},   {3, 322.0, 2.4},    {4, 500.0, 184.0},
    {7, 233.8, 84.0},  {8, 522.0, 176.6},  {9, 6.5, -66.6},
    {12, 8.53, 88.0},  {15, 320.0, 153.0}, {16, 329.0, 32.3},
    {18, 158.0, 30.0}, {20, 680.0, 103.0}, {21, 274.0, 115.0},
    {23, 247.5, 84.6}, {24, 308.6, -92.2}, {25, 224.0, 47.2},
    {26, 139.0, 17.0}, {27, 281.0, 75.5},  {28, 206.0, 27.6},
    {29, 283.5, 26.9}, {31, 9.2, 4.6},     {39, 1104.0, 250.0},
};

const BranchRow kBranches[] = {
    {1, 2, 0.0035, 0.0411, 0.6987, 1.0},   {1, 39, 0.0010, 0.0250, 0.7500, 1.0},
    {2, 3, 0.0013, 0.0151, 0.2572, 1.0},   {2, 25, 0.0070, 0.0086, 0.1460, 1.0},
    {2, 30, 0.0000, 0.0181, 0.0000, 1.025},{3, 4, 0.0013, 0.0213, 0.2214, 1.0},
    {3, 18, 0.0011, 0.0133, 0.2138, 1.0},  {4, 5, 0.0008, 0.0128, 0.1342, 1.0},
    {4, 14, 0.0008, 0.0129, 0.1382, 1.0},  {5, 6, 0.0002, 0.0026, 0.0434, 1.0},
    {5, 8, 0.0008, 0.0112, 0.1476, 1.0},   {6, 7, 0.0006, 0.0092, 0.1130, 1.0},
    {6, 11, 0.0007, 0.0082, 0.1389, 1.0},  {6, 31, 0.0000, 0.0250, 0.0000, 1.070},
    {7, 8, 0.0004, 0.0046, 0.0780, 1.0},   {8, 9, 0.0023, 0.0363, 0.3804, 1.0},
    {9, 39, 0.0010, 0.0250, 1.2000, 1.0},  {10, 11, 0.0004, 0.0043, 0.0729, 1.0},
    {10, 13, 0.0004, 0.0043, 0.0729, 1.0}, {10, 32, 0.0000, 0.0200, 0.0000, 1.070},
    {12, 11, 0.0016, 0.0435, 0.0000, 1.006},{12, 13, 0.0016, 0.0435, 0.0000, 1.006},
    {13, 14, 0.0009, 0.0101, 0.1723, 1.0}, {14, 15, 0.0018, 0.0217, 0.3660, 1.0},
    {15, 16, 0.0009, 0.0094, 0.1710, 1.0}, {16, 17, 0.0007, 0.0089, 0.1342, 1.0},
    {16, 19, 0.0016, 0.0195, 0.3040, 1.0}, {16, 21, 0.0008, 0.0135, 0.2548, 1.0},
    {16, 24, 0.0003, 0.0059, 0.0680, 1.0}, {17, 18, 0.0007, 0.0082, 0.1319, 1.0},
    {17, 27, 0.0013, 0.0173, 0.3216, 1.0}, {19, 20, 0.0007, 0.0138, 0.0000, 1.060},
    {19, 33, 0.0007, 0.0142, 0.0000, 1.070},{20, 34, 0.0009, 0.0180, 0.0000, 1.009},
    {21, 22, 0.0008, 0.0140, 0.2565, 1.0}, {22, 23, 0.0006, 0.0096, 0.1846, 1.0},
    {22, 35, 0.0000, 0.0143, 0.0000, 1.025},{23, 24, 0.0022, 0.0350, 0.3610, 1.0},
    {23, 36, 0.0005, 0.0272, 0.0000, 1.000},{25, 26, 0.0032, 0.0323, 0.5130, 1.0},
    {25, 37, 0.0006, 0.0232, 0.0000, 1.025},{26, 27, 0.0014, 0.0147, 0.2396, 1.0},
    {26, 28, 0.0043, 0.0474, 0.7802, 1.0}, {26, 29, 0.0057, 0.0625, 1.0290, 1.0},
    {28, 29, 0.0014, 0.0151, 0.2490, 1.0}, {29, 38, 0.0008, 0.0156, 0.0000, 1.025},
};

// Machine buses with the standard dispatch; bus 31 is the slack.
const GenRow kGens[] = {
    {30, 250.0, 1.0499}, {31, 0.0, 0.9820},   {32, 650.0, 0.9841},
    {33, 632.0, 0.9972}, {34, 508.0, 1.0123}, {35, 650.0, 1.0494},
    {36, 560.0, 1.0636}, {37, 540.0, 1.0275}, {38, 830.0, 1.0265},
    {39, 1000.0, 1.0300},
};

}  // namespace

CaseScenario build_ieee39_ibr() {
  CaseScenario sc;
  sc.label = "ieee39_ibr";
  sc.network.base_mva = 100.0;
  sc.network.base_frequency = 60.0;
  for (int id = 1; id <= 39; ++id) {
    sc.network.buses.push_back({id, "bus" + std::to_string(id), 345.0, 0.0, 0.0});
  }
  for (const BranchRow& b : kBranches) {
    sc.network.branches.push_back({b.from, b.to, b.r, b.x, b.b, b.tap, true});
  }
  for (const LoadRow& l : kLoads) {
    sc.loads.push_back({l.bus, l.p_mw / 100.0, l.q_mvar / 100.0, 1.0, true});
  }

  // Alternate converter classes by ascending machine bus number, lowest GFM.
  bool gfm_turn = true;
  for (const GenRow& g : kGens) {
    if (gfm_turn) {
      GfmCase d;
      d.dev.name = "gfm" + std::to_string(g.bus);
      d.dev.bus = g.bus;
      // Heavier virtual rotors with strong damping keep the post-outage
      // frequency ramp slow and the inter-machine modes well settled by the
      // end of the run.
      d.dev.inertia_h = 8.0;
      d.dev.damping_d = 40.0;
      d.p_set = g.p_mw / 100.0;
      d.v_set = g.v_set;
      sc.gfm.push_back(d);
    } else {
      GflCase d;
      d.dev.name = "gfl" + std::to_string(g.bus);
      d.dev.bus = g.bus;
      d.p_set = g.p_mw / 100.0;
      d.v_set = g.v_set;
      sc.gfl.push_back(d);
    }
    gfm_turn = !gfm_turn;
  }

  sc.power_flow.slack_bus = 31;
  sc.events.push_back({1.0, EventKind::LoadOutage, 8, "", "", 0.0, 0.0, 0.0});
  sc.integrator.dt = 0.001;
  sc.integrator.t_end = 40.0;
  // A wider slope window averages out the residual swing ripple at the
  // 500 ms measurement point.
  sc.metrics.rocof_window = 0.3;
  sc.labels["dispatch"] =
      "standard 39-bus machine dispatch reused for the converters; "
      "assignment and parameters are artifact defaults";
  // Transformer branches keep their native impedance under the R/X sweep:
  // transforming them as well pushes the full dispatch past its loadability
  // limit before the ratio reaches 1.0.
  sc.rx_includes_transformers = false;
  sc.labels["rx_sweep"] =
      "R/X transform applies to lines only; transformers excluded for "
      "feasibility across the 0.1-1.0 range";
  return sc;
}

}  // namespace cfsim
