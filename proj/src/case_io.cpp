#include "cfsim/case_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cfsim {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ValidationError(ctx + ": expected an object");
  }
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ValidationError(ctx + ": unknown key '" + key + "'");
  }
}

template <typename T>
T require(const json& j, const std::string& ctx, const char* key) {
  if (!j.contains(key)) {
    throw ValidationError(ctx + ": missing required key '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(ctx + "." + key + ": " + e.what());
  }
}

Bus parse_bus(const json& j) {
  const std::string ctx = "bus";
  check_keys(j, ctx, {"id", "name", "base_kv", "shunt_g", "shunt_b"});
  Bus b;
  b.id = require<int>(j, ctx, "id");
  b.name = j.value("name", std::string("bus") + std::to_string(b.id));
  b.base_kv = require<double>(j, ctx, "base_kv");
  b.shunt_g = j.value("shunt_g", 0.0);
  b.shunt_b = j.value("shunt_b", 0.0);
  return b;
}

Branch parse_branch(const json& j) {
  const std::string ctx = "branch";
  check_keys(j, ctx, {"from", "to", "r", "x", "b", "tap", "in_service"});
  Branch br;
  br.from_bus = require<int>(j, ctx, "from");
  br.to_bus = require<int>(j, ctx, "to");
  br.resistance_r = require<double>(j, ctx, "r");
  br.reactance_x = require<double>(j, ctx, "x");
  br.charging_b = j.value("b", 0.0);
  br.tap_ratio = j.value("tap", 1.0);
  br.in_service = j.value("in_service", true);
  return br;
}

GfmCase parse_gfm(const json& j) {
  const std::string ctx = "gfm device";
  check_keys(j, ctx,
             {"name", "bus", "p_set", "v_set", "inertia_h", "damping_d",
              "freq_droop_gain", "volt_droop_gain", "coupling_r", "coupling_x",
              "avr_time_const"});
  GfmCase g;
  g.dev.name = require<std::string>(j, ctx, "name");
  g.dev.bus = require<int>(j, ctx, "bus");
  g.p_set = require<double>(j, ctx, "p_set");
  g.v_set = require<double>(j, ctx, "v_set");
  g.dev.inertia_h = j.value("inertia_h", 3.0);
  g.dev.damping_d = j.value("damping_d", 1.0);
  g.dev.freq_droop_gain = j.value("freq_droop_gain", 20.0);
  g.dev.volt_droop_gain = j.value("volt_droop_gain", 10.0);
  g.dev.coupling_r = j.value("coupling_r", 0.0);
  g.dev.coupling_x = j.value("coupling_x", 0.15);
  g.dev.avr_time_const = j.value("avr_time_const", 0.05);
  return g;
}

GflCase parse_gfl(const json& j) {
  const std::string ctx = "gfl device";
  check_keys(j, ctx,
             {"name", "bus", "p_set", "v_set", "freq_droop_gain",
              "volt_droop_gain", "pll_kp", "pll_ki", "current_lag_t"});
  GflCase g;
  g.dev.name = require<std::string>(j, ctx, "name");
  g.dev.bus = require<int>(j, ctx, "bus");
  g.p_set = require<double>(j, ctx, "p_set");
  g.v_set = require<double>(j, ctx, "v_set");
  g.dev.freq_droop_gain = j.value("freq_droop_gain", 20.0);
  g.dev.volt_droop_gain = j.value("volt_droop_gain", 10.0);
  g.dev.pll_kp = j.value("pll_kp", 10.0);
  g.dev.pll_ki = j.value("pll_ki", 50.0);
  g.dev.current_lag_t = j.value("current_lag_t", 0.02);
  return g;
}

LoadModel parse_load(const json& j) {
  const std::string ctx = "load";
  check_keys(j, ctx, {"bus", "p", "q"});
  LoadModel l;
  l.bus = require<int>(j, ctx, "bus");
  l.p0 = require<double>(j, ctx, "p");
  l.q0 = require<double>(j, ctx, "q");
  return l;
}

Event parse_event(const json& j) {
  const std::string ctx = "event";
  check_keys(j, ctx, {"time", "kind", "bus", "device", "field", "delta_p",
                      "delta_q", "delta"});
  Event e;
  e.time = require<double>(j, ctx, "time");
  const std::string kind = require<std::string>(j, ctx, "kind");
  if (kind == "load_outage") {
    e.kind = EventKind::LoadOutage;
    e.bus = require<int>(j, ctx, "bus");
  } else if (kind == "load_step") {
    e.kind = EventKind::LoadStep;
    e.bus = require<int>(j, ctx, "bus");
    e.delta_p = j.value("delta_p", 0.0);
    e.delta_q = j.value("delta_q", 0.0);
  } else if (kind == "setpoint_step") {
    e.kind = EventKind::SetpointStep;
    e.device = require<std::string>(j, ctx, "device");
    e.field = require<std::string>(j, ctx, "field");
    e.delta = require<double>(j, ctx, "delta");
  } else {
    throw ValidationError("event: unknown kind '" + kind + "'");
  }
  return e;
}

json bus_json(const Bus& b) {
  return json{{"id", b.id},       {"name", b.name},       {"base_kv", b.base_kv},
              {"shunt_g", b.shunt_g}, {"shunt_b", b.shunt_b}};
}

json branch_json(const Branch& br) {
  return json{{"from", br.from_bus}, {"to", br.to_bus},
              {"r", br.resistance_r}, {"x", br.reactance_x},
              {"b", br.charging_b},   {"tap", br.tap_ratio},
              {"in_service", br.in_service}};
}

json gfm_json(const GfmCase& g) {
  return json{{"name", g.dev.name},
              {"bus", g.dev.bus},
              {"p_set", g.p_set},
              {"v_set", g.v_set},
              {"inertia_h", g.dev.inertia_h},
              {"damping_d", g.dev.damping_d},
              {"freq_droop_gain", g.dev.freq_droop_gain},
              {"volt_droop_gain", g.dev.volt_droop_gain},
              {"coupling_r", g.dev.coupling_r},
              {"coupling_x", g.dev.coupling_x},
              {"avr_time_const", g.dev.avr_time_const}};
}

json gfl_json(const GflCase& g) {
  return json{{"name", g.dev.name},
              {"bus", g.dev.bus},
              {"p_set", g.p_set},
              {"v_set", g.v_set},
              {"freq_droop_gain", g.dev.freq_droop_gain},
              {"volt_droop_gain", g.dev.volt_droop_gain},
              {"pll_kp", g.dev.pll_kp},
              {"pll_ki", g.dev.pll_ki},
              {"current_lag_t", g.dev.current_lag_t}};
}

json event_json(const Event& e) {
  json j{{"time", e.time}};
  switch (e.kind) {
    case EventKind::LoadOutage:
      j["kind"] = "load_outage";
      j["bus"] = e.bus;
      break;
    case EventKind::LoadStep:
      j["kind"] = "load_step";
      j["bus"] = e.bus;
      j["delta_p"] = e.delta_p;
      j["delta_q"] = e.delta_q;
      break;
    case EventKind::SetpointStep:
      j["kind"] = "setpoint_step";
      j["device"] = e.device;
      j["field"] = e.field;
      j["delta"] = e.delta;
      break;
  }
  return j;
}

}  // namespace

std::vector<Violation> validate_scenario(const CaseScenario& sc) {
  std::vector<Violation> out = validate(sc.network);

  std::map<std::string, int> names;
  std::map<int, int> device_buses;
  auto check_device = [&](const std::string& name, int bus) {
    if (++names[name] > 1) out.push_back({"device " + name, "duplicate device name"});
    if (sc.network.bus_index(bus) < 0) {
      out.push_back({"device " + name, "unknown bus " + std::to_string(bus)});
    }
    if (++device_buses[bus] > 1) {
      out.push_back({"device " + name,
                     "multiple devices at bus " + std::to_string(bus)});
    }
  };
  for (const GfmCase& g : sc.gfm) {
    check_device(g.dev.name, g.dev.bus);
    if (!(g.dev.inertia_h > 0.0)) out.push_back({"device " + g.dev.name, "inertia_h must be positive"});
    if (g.dev.coupling_z() == Complex{0, 0}) out.push_back({"device " + g.dev.name, "coupling impedance must be nonzero"});
    if (!(g.dev.avr_time_const > 0.0)) out.push_back({"device " + g.dev.name, "avr_time_const must be positive"});
  }
  for (const GflCase& g : sc.gfl) {
    check_device(g.dev.name, g.dev.bus);
    if (!(g.dev.current_lag_t > 0.0)) out.push_back({"device " + g.dev.name, "current_lag_t must be positive"});
  }
  if (sc.gfm.empty() && sc.gfl.empty()) {
    out.push_back({"devices", "no source devices"});
  }

  std::map<int, int> load_buses;
  for (const LoadModel& l : sc.loads) {
    if (sc.network.bus_index(l.bus) < 0) {
      out.push_back({"load at bus " + std::to_string(l.bus), "unknown bus"});
    }
    ++load_buses[l.bus];
  }

  if (sc.network.bus_index(sc.power_flow.slack_bus) < 0) {
    out.push_back({"power_flow", "unknown slack bus " + std::to_string(sc.power_flow.slack_bus)});
  } else if (device_buses.find(sc.power_flow.slack_bus) == device_buses.end()) {
    out.push_back({"power_flow", "slack bus " + std::to_string(sc.power_flow.slack_bus) + " hosts no device"});
  }

  for (size_t i = 0; i < sc.events.size(); ++i) {
    const Event& e = sc.events[i];
    const std::string ent = "event " + std::to_string(i);
    if (e.time < 0.0) out.push_back({ent, "time must be non-negative"});
    if (e.kind == EventKind::LoadOutage || e.kind == EventKind::LoadStep) {
      if (load_buses.find(e.bus) == load_buses.end()) {
        out.push_back({ent, "no load at bus " + std::to_string(e.bus)});
      }
    } else if (e.kind == EventKind::SetpointStep) {
      if (names.find(e.device) == names.end()) {
        out.push_back({ent, "unknown device " + e.device});
      }
      if (e.field != "p_ref" && e.field != "q_ref" && e.field != "v_ref") {
        out.push_back({ent, "unknown field " + e.field});
      }
    }
  }

  if (!(sc.integrator.dt > 0.0)) out.push_back({"integrator", "dt must be positive"});
  if (!(sc.integrator.t_end >= 0.0)) out.push_back({"integrator", "t_end must be non-negative"});
  if (!(sc.integrator.newton_tol > 0.0)) out.push_back({"integrator", "newton_tol must be positive"});
  if (sc.rx_ratio && !(*sc.rx_ratio > 0.0)) out.push_back({"rx_ratio", "must be positive"});
  return out;
}

CaseScenario parse_case(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("case parse error: ") + e.what());
  }
  const std::string ctx = "case";
  check_keys(j, ctx,
             {"schema_version", "label", "network", "power_flow", "devices",
              "events", "integrator", "metrics", "rx_ratio",
              "rx_includes_transformers", "labels"});
  const int version = require<int>(j, ctx, "schema_version");
  if (version != 1) {
    throw ValidationError("unsupported schema_version " + std::to_string(version));
  }

  CaseScenario sc;
  sc.label = j.value("label", std::string("case"));

  const json& nj = j.at("network");
  check_keys(nj, "network", {"base_mva", "base_frequency", "buses", "branches"});
  sc.network.base_mva = require<double>(nj, "network", "base_mva");
  sc.network.base_frequency = require<double>(nj, "network", "base_frequency");
  for (const json& bj : require<json>(nj, "network", "buses")) {
    sc.network.buses.push_back(parse_bus(bj));
  }
  for (const json& bj : require<json>(nj, "network", "branches")) {
    sc.network.branches.push_back(parse_branch(bj));
  }

  const json& pj = j.at("power_flow");
  check_keys(pj, "power_flow", {"slack_bus", "tolerance", "max_iterations"});
  sc.power_flow.slack_bus = require<int>(pj, "power_flow", "slack_bus");
  sc.power_flow.tolerance = pj.value("tolerance", 1e-8);
  sc.power_flow.max_iterations = pj.value("max_iterations", 50);

  const json& dj = j.at("devices");
  check_keys(dj, "devices", {"gfm", "gfl", "loads"});
  if (dj.contains("gfm")) {
    for (const json& g : dj.at("gfm")) sc.gfm.push_back(parse_gfm(g));
  }
  if (dj.contains("gfl")) {
    for (const json& g : dj.at("gfl")) sc.gfl.push_back(parse_gfl(g));
  }
  if (dj.contains("loads")) {
    for (const json& l : dj.at("loads")) sc.loads.push_back(parse_load(l));
  }

  if (j.contains("events")) {
    for (const json& e : j.at("events")) sc.events.push_back(parse_event(e));
  }

  if (j.contains("integrator")) {
    const json& ij = j.at("integrator");
    check_keys(ij, "integrator", {"dt", "t_end", "newton_tol", "newton_max_iter"});
    sc.integrator.dt = ij.value("dt", 0.001);
    sc.integrator.t_end = ij.value("t_end", 1.0);
    sc.integrator.newton_tol = ij.value("newton_tol", 1e-9);
    sc.integrator.newton_max_iter = ij.value("newton_max_iter", 20);
  }

  if (j.contains("metrics")) {
    const json& mj = j.at("metrics");
    check_keys(mj, "metrics",
               {"mode", "injection_floor", "magnitude_floor", "rocof_offset",
                "rocof_window", "omega_in_pu"});
    const std::string mode = mj.value("mode", std::string("analytic"));
    if (mode == "analytic") sc.metrics.mode = DerivativeMode::Analytic;
    else if (mode == "diff") sc.metrics.mode = DerivativeMode::CentralDifference;
    else throw ValidationError("metrics.mode: expected 'analytic' or 'diff'");
    sc.metrics.injection_floor = mj.value("injection_floor", 1e-9);
    sc.metrics.magnitude_floor = mj.value("magnitude_floor", 1e-6);
    sc.metrics.rocof_offset = mj.value("rocof_offset", 0.5);
    sc.metrics.rocof_window = mj.value("rocof_window", 0.1);
    sc.metrics.omega_in_pu = mj.value("omega_in_pu", true);
  }

  if (j.contains("rx_ratio") && !j.at("rx_ratio").is_null()) {
    sc.rx_ratio = j.at("rx_ratio").get<double>();
  }
  sc.rx_includes_transformers = j.value("rx_includes_transformers", true);
  if (j.contains("labels")) {
    for (const auto& [k, v] : j.at("labels").items()) {
      sc.labels[k] = v.get<std::string>();
    }
  }

  const std::vector<Violation> violations = validate_scenario(sc);
  if (!violations.empty()) {
    std::ostringstream os;
    os << "case validation failed:";
    for (const Violation& v : violations) os << "\n  " << v.entity << ": " << v.rule;
    throw ValidationError(os.str());
  }
  return sc;
}

CaseScenario load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open case file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

std::string serialize_case(const CaseScenario& sc) {
  json j;
  j["schema_version"] = 1;
  j["label"] = sc.label;
  j["network"] = {{"base_mva", sc.network.base_mva},
                  {"base_frequency", sc.network.base_frequency},
                  {"buses", json::array()},
                  {"branches", json::array()}};
  for (const Bus& b : sc.network.buses) j["network"]["buses"].push_back(bus_json(b));
  for (const Branch& br : sc.network.branches) {
    j["network"]["branches"].push_back(branch_json(br));
  }
  j["power_flow"] = {{"slack_bus", sc.power_flow.slack_bus},
                     {"tolerance", sc.power_flow.tolerance},
                     {"max_iterations", sc.power_flow.max_iterations}};
  j["devices"] = {{"gfm", json::array()}, {"gfl", json::array()}, {"loads", json::array()}};
  for (const GfmCase& g : sc.gfm) j["devices"]["gfm"].push_back(gfm_json(g));
  for (const GflCase& g : sc.gfl) j["devices"]["gfl"].push_back(gfl_json(g));
  for (const LoadModel& l : sc.loads) {
    j["devices"]["loads"].push_back(json{{"bus", l.bus}, {"p", l.p0}, {"q", l.q0}});
  }
  j["events"] = json::array();
  for (const Event& e : sc.events) j["events"].push_back(event_json(e));
  j["integrator"] = {{"dt", sc.integrator.dt},
                     {"t_end", sc.integrator.t_end},
                     {"newton_tol", sc.integrator.newton_tol},
                     {"newton_max_iter", sc.integrator.newton_max_iter}};
  j["metrics"] = {
      {"mode", sc.metrics.mode == DerivativeMode::Analytic ? "analytic" : "diff"},
      {"injection_floor", sc.metrics.injection_floor},
      {"magnitude_floor", sc.metrics.magnitude_floor},
      {"rocof_offset", sc.metrics.rocof_offset},
      {"rocof_window", sc.metrics.rocof_window},
      {"omega_in_pu", sc.metrics.omega_in_pu}};
  if (sc.rx_ratio) j["rx_ratio"] = *sc.rx_ratio;
  else j["rx_ratio"] = nullptr;
  j["rx_includes_transformers"] = sc.rx_includes_transformers;
  j["labels"] = json::object();
  for (const auto& [k, v] : sc.labels) j["labels"][k] = v;
  return j.dump(2) + "\n";
}

void save_case(const CaseScenario& sc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write case file " + path.string());
  out << serialize_case(sc);
}

}  // namespace cfsim
