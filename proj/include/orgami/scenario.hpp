#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "orgami/anc.hpp"
#include "orgami/deploy.hpp"
#include "orgami/engine.hpp"
#include "orgami/petri.hpp"
#include "orgami/voting.hpp"

namespace orgami::scen {

using nlohmann::json;

inline constexpr const char* kVersion = "orgami 0.1.0";

// ---------------------------------------------------------------------------
// Value <-> JSON
// ---------------------------------------------------------------------------

inline Value value_from_json(const json& j) {
  if (j.is_boolean()) return Value::boolean(j.get<bool>());
  if (j.is_number_integer()) return Value::integer(j.get<std::int64_t>());
  if (j.is_number_float()) return Value::real(j.get<double>());
  if (j.is_string()) return Value::text(j.get<std::string>());
  throw ParseError("unsupported value type in scenario: " + j.dump());
}

inline json value_to_json(const Value& v) {
  switch (v.type()) {
    case Value::Type::boolean: return v.as_bool();
    case Value::Type::integer: return v.as_int();
    case Value::Type::real: return v.as_real();
    case Value::Type::text: return v.as_text();
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Scenario model
// ---------------------------------------------------------------------------

struct TopologySpec {
  std::string kind = "custom";
  int n = 0;
  int k = 4;
  double beta = 0.0;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edge_list;

  Topology build(std::uint64_t scenario_seed) const {
    if (kind == "custom") return topo::from_edges(nodes, edge_list);
    const std::uint64_t s = seed.value_or(scenario_seed);
    topo::GenParams params{k, beta};
    if (kind == "ring") return topo::generate(Topology::Kind::ring, n, params, s);
    if (kind == "star") return topo::generate(Topology::Kind::star, n, params, s);
    if (kind == "grid") return topo::generate(Topology::Kind::grid, n, params, s);
    if (kind == "small_world") return topo::generate(Topology::Kind::small_world, n, params, s);
    throw InvalidParams("unknown topology kind '" + kind + "'");
  }
};

struct DriverEvent {
  SimTime at = 0;
  ResourceAddress address;
  Value value;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  std::optional<TopologySpec> topology;
  LinkModel link = LinkModel::fixed(1);
  Choreography cells;
  std::vector<ResourceAddress> sensor_bindings;  // driver-fed /S/ inputs
  std::vector<DriverEvent> drivers;
  std::vector<std::pair<SimTime, TopologySpec>> switches;
  std::string experiment_type;  // flow | petri | deploy | anc | vote
  json experiment;
  int ttl = 64;
  std::size_t max_states = 100000;
  SimTime max_time = 100000;
};

// ---------------------------------------------------------------------------
// Validation: the whole document is checked and every violation reported,
// not just the first.
// ---------------------------------------------------------------------------

namespace detail {

class Validator {
public:
  std::vector<std::string> issues;

  bool object(const json& j, const std::string& path, const std::set<std::string>& allowed,
              const std::set<std::string>& required) {
    if (!j.is_object()) {
      issues.push_back(path + ": expected an object");
      return false;
    }
    for (const auto& [key, value] : j.items())
      if (!allowed.count(key)) issues.push_back(path + ": unknown field '" + key + "'");
    bool ok = true;
    for (const auto& key : required)
      if (!j.contains(key)) {
        issues.push_back(path + ": missing required field '" + key + "'");
        ok = false;
      }
    return ok;
  }

  template <typename Pred>
  bool field(const json& j, const std::string& path, const std::string& key, Pred pred,
             const char* what, bool required = false) {
    if (!j.contains(key)) {
      if (required) issues.push_back(path + ": missing required field '" + key + "'");
      return false;
    }
    if (!pred(j.at(key))) {
      issues.push_back(path + "." + key + ": expected " + what);
      return false;
    }
    return true;
  }

  void fail(const std::string& path, const std::string& what) { issues.push_back(path + ": " + what); }
};

inline bool is_uint(const json& j) { return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0); }
inline bool is_int(const json& j) { return j.is_number_integer(); }
inline bool is_num(const json& j) { return j.is_number(); }
inline bool is_str(const json& j) { return j.is_string(); }
inline bool is_arr(const json& j) { return j.is_array(); }
inline bool is_obj(const json& j) { return j.is_object(); }
inline bool is_bool(const json& j) { return j.is_boolean(); }
inline bool is_scalar(const json& j) {
  return j.is_boolean() || j.is_number() || j.is_string();
}

inline TopologySpec parse_topology_spec(const json& j, const std::string& path, Validator& v) {
  TopologySpec spec;
  if (!v.object(j, path,
                {"kind", "n", "k", "beta", "seed", "nodes", "edges"}, {"kind"}))
    return spec;
  if (v.field(j, path, "kind", is_str, "a string", true)) spec.kind = j.at("kind");
  if (spec.kind == "custom") {
    if (v.field(j, path, "nodes", is_arr, "an array of node ids", true))
      for (const auto& n : j.at("nodes")) {
        if (!n.is_string()) v.fail(path + ".nodes", "node ids must be strings");
        else spec.nodes.push_back(n.get<std::string>());
      }
    if (v.field(j, path, "edges", is_arr, "an array of [u,v] pairs", true))
      for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
          v.fail(path + ".edges", "each edge must be a [u,v] pair of node ids");
        else
          spec.edge_list.push_back({e[0].get<std::string>(), e[1].get<std::string>()});
      }
  } else {
    if (v.field(j, path, "n", is_uint, "a positive integer", true)) spec.n = j.at("n").get<int>();
    if (v.field(j, path, "k", is_uint, "a positive integer")) spec.k = j.at("k").get<int>();
    if (v.field(j, path, "beta", is_num, "a number in [0,1]")) spec.beta = j.at("beta").get<double>();
    if (v.field(j, path, "seed", is_uint, "an unsigned integer"))
      spec.seed = j.at("seed").get<std::uint64_t>();
  }
  return spec;
}

inline LinkModel parse_link(const json& j, const std::string& path, Validator& v) {
  LinkModel link = LinkModel::fixed(1);
  if (!v.object(j, path, {"delay", "loss_prob"}, {})) return link;
  double loss = 0.0;
  if (v.field(j, path, "loss_prob", is_num, "a number in [0,1]"))
    loss = j.at("loss_prob").get<double>();
  if (j.contains("delay")) {
    const json& d = j.at("delay");
    if (d.is_object() && d.contains("fixed") && is_uint(d.at("fixed")))
      link = LinkModel::fixed(d.at("fixed").get<SimTime>(), loss);
    else if (d.is_object() && d.contains("uniform") && d.at("uniform").is_array() &&
             d.at("uniform").size() == 2)
      link = LinkModel::uniform(d.at("uniform")[0].get<SimTime>(),
                                d.at("uniform")[1].get<SimTime>(), loss);
    else
      v.fail(path + ".delay", "expected {\"fixed\": n} or {\"uniform\": [lo,hi]}");
  } else {
    link = LinkModel::fixed(1, loss);
  }
  return link;
}

}  // namespace detail

inline Scenario parse_scenario(const json& j) {
  detail::Validator v;
  Scenario sc;
  v.object(j, "$",
           {"name", "seed", "topology", "link", "cells", "drivers", "switches", "experiment",
            "limits"},
           {"name", "cells", "experiment"});
  if (!j.is_object()) throw ValidationError(std::move(v.issues));

  if (v.field(j, "$", "name", detail::is_str, "a string", true)) sc.name = j.at("name");
  if (v.field(j, "$", "seed", detail::is_uint, "an unsigned integer"))
    sc.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("topology")) sc.topology = detail::parse_topology_spec(j.at("topology"), "$.topology", v);
  if (j.contains("link")) sc.link = detail::parse_link(j.at("link"), "$.link", v);

  std::set<std::string> cell_ids;
  if (v.field(j, "$", "cells", detail::is_arr, "an array of cells", true)) {
    int ci = 0;
    for (const auto& cj : j.at("cells")) {
      const std::string cpath = "$.cells[" + std::to_string(ci++) + "]";
      if (!v.object(cj, cpath, {"id", "resources", "sensors"}, {"id"})) continue;
      CellSpec cs;
      if (v.field(cj, cpath, "id", detail::is_str, "a string", true)) {
        cs.id = cj.at("id");
        if (!is_valid_cell_id(cs.id)) v.fail(cpath + ".id", "invalid cell id '" + cs.id + "'");
        if (!cell_ids.insert(cs.id).second) v.fail(cpath + ".id", "duplicate cell id '" + cs.id + "'");
      }
      if (cj.contains("resources")) {
        if (!cj.at("resources").is_array()) {
          v.fail(cpath + ".resources", "expected an array");
          continue;
        }
        int ri = 0;
        for (const auto& rj : cj.at("resources")) {
          const std::string rpath = cpath + ".resources[" + std::to_string(ri++) + "]";
          if (!v.object(rj, rpath, {"kind", "name", "value", "rule", "direction"}, {"kind", "name"}))
            continue;
          ResourceSpec rs;
          std::string kind_str;
          if (v.field(rj, rpath, "kind", detail::is_str, "\"L\", \"S\" or \"A\"", true))
            kind_str = rj.at("kind");
          if (kind_str != "L" && kind_str != "S" && kind_str != "A") {
            v.fail(rpath + ".kind", "must be \"L\", \"S\" or \"A\"");
            continue;
          }
          rs.kind = parse_kind(kind_str[0]);
          if (v.field(rj, rpath, "name", detail::is_str, "a string", true)) {
            rs.name = rj.at("name");
            if (!is_valid_name(rs.name)) v.fail(rpath + ".name", "invalid resource name");
          }
          if (rs.kind == Kind::A) {
            if (v.field(rj, rpath, "rule", detail::is_str, "rule source text", true)) {
              rs.value = Value::text(rj.at("rule").get<std::string>());
              try {
                parse_rule(rs.value.as_text());
              } catch (const Error& e) {
                v.fail(rpath + ".rule", e.what());
              }
            }
          } else if (v.field(rj, rpath, "value", detail::is_scalar, "a scalar value", true)) {
            try {
              rs.value = value_from_json(rj.at("value"));
            } catch (const Error& e) {
              v.fail(rpath + ".value", e.what());
            }
          }
          if (v.field(rj, rpath, "direction", detail::is_str, "\"in\" or \"out\"")) {
            rs.direction = rj.at("direction");
            if (rs.kind != Kind::S) v.fail(rpath + ".direction", "only /S/ resources have a direction");
            else if (rs.direction != "in" && rs.direction != "out")
              v.fail(rpath + ".direction", "must be \"in\" or \"out\"");
          }
          cs.resources.push_back(std::move(rs));
        }
      }
      if (cj.contains("sensors")) {
        if (!cj.at("sensors").is_array()) {
          v.fail(cpath + ".sensors", "expected an array of /S/ resource names");
        } else {
          for (const auto& sj : cj.at("sensors")) {
            if (!sj.is_string() || !is_valid_name(sj.get<std::string>()))
              v.fail(cpath + ".sensors", "sensor entries must be resource names");
            else
              sc.sensor_bindings.push_back(
                  ResourceAddress{cs.id, Kind::S, sj.get<std::string>()});
          }
        }
      }
      sc.cells.cells.push_back(std::move(cs));
    }
  }

  if (j.contains("drivers")) {
    if (!j.at("drivers").is_array()) {
      v.fail("$.drivers", "expected an array");
    } else {
      int di = 0;
      for (const auto& dj : j.at("drivers")) {
        const std::string dpath = "$.drivers[" + std::to_string(di++) + "]";
        if (!v.object(dj, dpath, {"at", "address", "value"}, {"at", "address", "value"})) continue;
        DriverEvent ev;
        if (v.field(dj, dpath, "at", detail::is_uint, "a time tick", true))
          ev.at = dj.at("at").get<SimTime>();
        if (v.field(dj, dpath, "address", detail::is_str, "a resource address", true)) {
          try {
            ev.address = ResourceAddress::parse(dj.at("address").get<std::string>());
            if (!cell_ids.count(ev.address.cell))
              v.fail(dpath + ".address", "references unknown cell '" + ev.address.cell + "'");
          } catch (const Error& e) {
            v.fail(dpath + ".address", e.what());
          }
        }
        if (v.field(dj, dpath, "value", detail::is_scalar, "a scalar value", true)) {
          try {
            ev.value = value_from_json(dj.at("value"));
          } catch (const Error& e) {
            v.fail(dpath + ".value", e.what());
          }
        }
        sc.drivers.push_back(std::move(ev));
      }
    }
  }

  if (j.contains("switches")) {
    if (!j.at("switches").is_array()) {
      v.fail("$.switches", "expected an array");
    } else {
      int si = 0;
      for (const auto& sj : j.at("switches")) {
        const std::string spath = "$.switches[" + std::to_string(si++) + "]";
        if (!v.object(sj, spath, {"at", "topology"}, {"at", "topology"})) continue;
        SimTime at = 0;
        if (v.field(sj, spath, "at", detail::is_uint, "a time tick", true))
          at = sj.at("at").get<SimTime>();
        sc.switches.push_back(
            {at, detail::parse_topology_spec(sj.at("topology"), spath + ".topology", v)});
      }
    }
  }

  if (v.field(j, "$", "experiment", detail::is_obj, "an object", true)) {
    const json& ej = j.at("experiment");
    if (v.field(ej, "$.experiment", "type", detail::is_str, "an experiment type", true)) {
      sc.experiment_type = ej.at("type");
      static const std::set<std::string> kTypes{"flow", "petri", "deploy", "anc", "vote"};
      if (!kTypes.count(sc.experiment_type))
        v.fail("$.experiment.type", "unknown experiment '" + sc.experiment_type + "'");
    }
    static const std::map<std::string, std::set<std::string>> kAllowed{
        {"flow", {"type"}},
        {"petri",
         {"type", "inputs", "domains", "default_domain", "analyze", "range_place"}},
        {"deploy", {"type", "strategy", "bindings", "capacities", "inject_at", "budget"}},
        {"anc",
         {"type", "context_width", "signals", "presentations", "steps", "theta_select",
          "theta_learn", "alpha", "buffer", "hyper"}},
        {"vote",
         {"type", "profile", "eps", "tolerance", "delta", "max_iters", "max_rounds", "compiled",
          "faults", "bench"}},
    };
    auto it = kAllowed.find(sc.experiment_type);
    if (it != kAllowed.end()) v.object(ej, "$.experiment", it->second, {"type"});
    sc.experiment = ej;
  }

  if (j.contains("limits")) {
    const json& lj = j.at("limits");
    if (v.object(lj, "$.limits", {"ttl", "max_states", "max_time"}, {})) {
      if (v.field(lj, "$.limits", "ttl", detail::is_uint, "a positive integer"))
        sc.ttl = lj.at("ttl").get<int>();
      if (v.field(lj, "$.limits", "max_states", detail::is_uint, "a positive integer"))
        sc.max_states = lj.at("max_states").get<std::size_t>();
      if (v.field(lj, "$.limits", "max_time", detail::is_uint, "a time tick"))
        sc.max_time = lj.at("max_time").get<SimTime>();
    }
  }

  if (!v.issues.empty()) throw ValidationError(std::move(v.issues));
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("scenario '" + path + "': " + e.what());
  }
  return parse_scenario(j);
}

// ---------------------------------------------------------------------------
// Trace bundle
// ---------------------------------------------------------------------------

struct TraceBundle {
  json metadata;
  std::string events_csv;
  std::string messages_csv;
  std::vector<json> flow_lines;  // JSON lines, one flow step per line
  json report;
  std::map<std::string, std::string> extra_files;
  int verdict = 0;  // 0 ok, 3 experiment-verdict failure
};

inline json interaction_to_json(const Interaction& it) {
  json j{{"op", op_name(it.op)}, {"target", it.target.str()}};
  if (it.value) j["value"] = value_to_json(*it.value);
  return j;
}

inline json flow_step_to_json(const FlowTrace& tr, const FlowStep& st) {
  json j{{"flow", tr.id}, {"rule", st.rule}, {"fired_at", st.fired_at}};
  json emitted = json::array();
  for (const auto& it : st.emitted) emitted.push_back(interaction_to_json(it));
  j["emitted"] = emitted;
  if (!st.errors.empty()) j["errors"] = st.errors;
  if (st.suppressed) j["suppressed"] = true;
  return j;
}

inline json flow_summary_json(const FlowTrace& tr) {
  json j{{"flow", tr.id},
         {"steps", tr.steps.size()},
         {"terminated", tr.terminated},
         {"ttl_exhausted", tr.ttl_exhausted}};
  if (tr.trigger.value) {
    j["trigger"] = {{"address", tr.trigger.address.str()},
                    {"value", value_to_json(*tr.trigger.value)},
                    {"time", tr.trigger.time}};
  }
  if (!tr.apply_errors.empty()) j["apply_errors"] = tr.apply_errors;
  return j;
}

// ---------------------------------------------------------------------------
// Experiment runners
// ---------------------------------------------------------------------------

namespace detail {

inline System build_system(const Scenario& sc, bool cells_are_nodes) {
  Topology topo;
  if (sc.topology) {
    topo = sc.topology->build(sc.seed);
  } else {
    // No network block: a complete graph over the declared cells.
    for (const auto& cs : sc.cells.cells) topo.nodes.push_back(cs.id);
    std::sort(topo.nodes.begin(), topo.nodes.end());
    for (int i = 0; i < topo.size(); ++i)
      for (int j = i + 1; j < topo.size(); ++j) topo.add_edge(i, j);
  }
  System system(topo, sc.link, sc.seed);
  system.default_ttl = sc.ttl;
  for (const auto& node : system.sim().topology().nodes)
    if (!system.cells().count(node)) system.add_cell(node);
  if (!cells_are_nodes) return system;  // deploy: scenario cells stay logical
  for (const auto& cs : sc.cells.cells)
    if (!system.cells().count(cs.id))
      throw ValidationError({"cell '" + cs.id + "' is not a node of the topology"});
  system.load(sc.cells);
  for (const auto& addr : sc.sensor_bindings) system.cell(addr.cell).mark_sensor_input(addr);
  return system;
}

inline void fill_common(TraceBundle& bundle, const Scenario& sc, const System& system) {
  bundle.events_csv = event_log_csv(system.event_log());
  bundle.messages_csv = system.sim().message_log_csv();
  for (const auto* tr : system.flow_traces())
    for (const auto& st : tr->steps) bundle.flow_lines.push_back(flow_step_to_json(*tr, st));
}

inline TraceBundle run_flow_experiment(const Scenario& sc) {
  TraceBundle bundle;
  System system = build_system(sc, true);
  for (const auto& [at, spec] : sc.switches)
    system.schedule_topology_switch(spec.build(sc.seed), at);
  for (const auto& drv : sc.drivers) system.inject(drv.address, drv.value, drv.at);
  system.run_until(sc.max_time);

  json flows = json::array();
  for (const auto* tr : system.flow_traces()) flows.push_back(flow_summary_json(*tr));
  json cells = json::object();
  for (const auto& [id, cell] : system.cells()) {
    json c = json::object();
    for (const auto& [addr, res] : cell.resources()) c[addr.str()] = value_to_json(res.payload);
    cells[id] = c;
  }
  bundle.report = {{"module", "agent-engine"}, {"flows", flows}, {"final_state", cells}};
  fill_common(bundle, sc, system);
  return bundle;
}

inline petri::ExploreLimits parse_explore_limits(const Scenario& sc) {
  petri::ExploreLimits limits;
  limits.max_states = sc.max_states;
  const json& e = sc.experiment;
  if (e.contains("default_domain")) {
    const auto& d = e.at("default_domain");
    limits.default_domain = petri::IntDomain{d.at(0).get<std::int64_t>(), d.at(1).get<std::int64_t>()};
  }
  if (e.contains("domains"))
    for (const auto& [addr, d] : e.at("domains").items())
      limits.domains[ResourceAddress::parse(addr)] =
          petri::IntDomain{d.at(0).get<std::int64_t>(), d.at(1).get<std::int64_t>()};
  if (e.contains("inputs")) {
    for (const auto& [addr, spec] : e.at("inputs").items()) {
      petri::InputSpec is;
      if (spec.contains("sequence")) {
        for (const auto& vj : spec.at("sequence")) is.sequence.push_back(value_from_json(vj));
      } else if (spec.contains("domain")) {
        is.is_domain = true;
        is.domain = petri::IntDomain{spec.at("domain").at(0).get<std::int64_t>(),
                                     spec.at("domain").at(1).get<std::int64_t>()};
      }
      limits.inputs[ResourceAddress::parse(addr)] = std::move(is);
    }
  }
  return limits;
}

inline TraceBundle run_petri_experiment(const Scenario& sc) {
  TraceBundle bundle;
  const petri::PetriNet net = petri::sc_to_petri(sc.cells);
  const petri::ExploreLimits limits = parse_explore_limits(sc);
  const petri::StateGraph graph = petri::explore_states(net, limits);

  json report{{"module", "petri"},
              {"places", net.places.size()},
              {"transitions", net.transitions.size()},
              {"states", graph.vertices.size()},
              {"edges", graph.edges.size()},
              {"complete", graph.complete}};
  if (!graph.complete) report["truncation_reason"] = graph.truncation_reason;

  std::set<std::string> analyses;
  if (sc.experiment.contains("analyze"))
    for (const auto& a : sc.experiment.at("analyze")) analyses.insert(a.get<std::string>());
  if (analyses.count("termination")) {
    const auto term = petri::check_termination(net, limits);
    const char* verdict = term.verdict == petri::TerminationResult::Verdict::terminates
                              ? "terminates"
                              : term.verdict == petri::TerminationResult::Verdict::may_not_terminate
                                    ? "may_not_terminate"
                                    : "unknown";
    report["termination"] = verdict;
    if (!term.witness_cycle.empty()) report["witness_cycle"] = term.witness_cycle;
  }
  if (analyses.count("range") && sc.experiment.contains("range_place")) {
    const auto place = ResourceAddress::parse(sc.experiment.at("range_place").get<std::string>());
    const auto range = petri::check_range(net, place, limits);
    json r{{"place", place.str()}, {"unknown_beyond_limit", range.unknown_beyond_limit}};
    if (range.min) r["min"] = value_to_json(*range.min);
    if (range.max) r["max"] = value_to_json(*range.max);
    report["range"] = r;
  }
  bundle.report = report;
  bundle.extra_files["net.pnml"] = petri::to_pnml(net);
  bundle.extra_files["stategraph.dot"] = petri::stategraph_to_dot(graph);

  json net_json{{"places", json::array()}, {"transitions", json::array()}};
  for (const auto& [addr, place] : net.places) {
    json p{{"id", addr.str()}};
    if (place.initial) p["initial"] = value_to_json(*place.initial);
    if (!place.direction.empty()) p["direction"] = place.direction;
    net_json["places"].push_back(p);
  }
  for (const auto& [addr, tr] : net.transitions)
    net_json["transitions"].push_back(
        {{"id", addr.str()}, {"agent_place", addr.str()}, {"rule", tr.source}});
  bundle.extra_files["net.json"] = net_json.dump(2) + "\n";
  return bundle;
}

inline TraceBundle run_deploy_experiment(const Scenario& sc) {
  TraceBundle bundle;
  const json& e = sc.experiment;
  deploy::Target target;
  if (!sc.topology) throw ValidationError({"deploy experiments need a topology"});
  target.topology = sc.topology->build(sc.seed);
  if (e.contains("bindings"))
    for (const auto& [addr, node] : e.at("bindings").items())
      target.bindings[addr] = node.get<std::string>();
  if (e.contains("capacities"))
    for (const auto& [node, cap] : e.at("capacities").items())
      target.capacity[node] = cap.get<int>();

  const auto graph = deploy::build_instantiation_graph(sc.cells, target);
  const auto instance = deploy::formulate_pbo(graph, target);
  const auto mapping = deploy::solve_pbo(instance);

  json mapping_json{{"objective", mapping.objective}, {"assignment", json::object()}};
  for (const auto& [id, node] : mapping.assignment) mapping_json["assignment"][id] = node;
  bundle.extra_files["mapping.json"] = mapping_json.dump(2) + "\n";
  bundle.extra_files["instance.opb"] = deploy::to_opb(instance);

  const std::string strategy = e.contains("strategy") ? e.at("strategy").get<std::string>() : "both";
  const std::string inject_at = e.contains("inject_at") ? e.at("inject_at").get<std::string>()
                                                        : target.topology.nodes.front();
  const SimTime budget = e.contains("budget") ? e.at("budget").get<SimTime>() : 10'000;

  json report{{"module", "deploy"}, {"objective", mapping.objective}, {"strategy", strategy}};
  const auto run_one = [&](deploy::Strategy st) {
    Scenario shadow = sc;
    shadow.cells = Choreography{};  // deployment targets start empty
    System system = build_system(shadow, true);
    const auto rep = deploy::deploy(st, sc.cells, mapping, system, inject_at, budget);
    json placement = json::object();
    for (const auto& [id, node] : rep.placement) placement[id] = node;
    return std::pair<json, bool>({{"placement", placement},
                                  {"complete", rep.complete},
                                  {"timeout", rep.timeout}},
                                 rep.complete);
  };
  bool ok = true;
  if (strategy == "direct" || strategy == "both") {
    auto [r, complete] = run_one(deploy::Strategy::direct);
    report["direct"] = r;
    ok = ok && complete;
  }
  if (strategy == "dna" || strategy == "both") {
    auto [r, complete] = run_one(deploy::Strategy::dna);
    report["dna"] = r;
    ok = ok && complete;
  }
  if (strategy == "both" && report.contains("direct") && report.contains("dna")) {
    const bool equal = report["direct"]["placement"] == report["dna"]["placement"];
    report["strategies_agree"] = equal;
    ok = ok && equal;
  }
  bundle.report = report;
  if (!ok) bundle.verdict = 3;
  return bundle;
}

inline TraceBundle run_anc_experiment(const Scenario& sc) {
  TraceBundle bundle;
  const json& e = sc.experiment;
  anc::ControllerConfig cfg;
  cfg.context_width = e.at("context_width").get<std::size_t>();
  cfg.state_width = cfg.context_width;
  if (e.contains("theta_select")) cfg.theta_select = e.at("theta_select").get<double>();
  cfg.theta_learn = e.contains("theta_learn") ? e.at("theta_learn").get<double>() : cfg.theta_select;
  if (e.contains("alpha")) cfg.alpha = e.at("alpha").get<double>();
  if (e.contains("buffer")) cfg.buffer_target = e.at("buffer").get<std::size_t>();
  if (e.contains("hyper")) {
    const json& h = e.at("hyper");
    if (h.contains("hidden")) cfg.hyper.hidden = h.at("hidden").get<std::size_t>();
    if (h.contains("lr")) cfg.hyper.lr = h.at("lr").get<double>();
    if (h.contains("epochs")) cfg.hyper.epochs = h.at("epochs").get<std::size_t>();
    cfg.hyper.seed = h.contains("seed") ? h.at("seed").get<std::uint64_t>() : sc.seed;
  } else {
    cfg.hyper.seed = sc.seed;
  }

  std::map<std::string, std::vector<anc::Vec>> signals;
  for (const auto& sj : e.at("signals")) {
    std::vector<anc::Vec> samples;
    for (const auto& row : sj.at("samples")) samples.push_back(row.get<anc::Vec>());
    signals[sj.at("name").get<std::string>()] = std::move(samples);
  }
  const std::size_t steps = e.at("steps").get<std::size_t>();

  // The controller is a specialized cellular service: completed trainings are
  // written back into a behavior resource on the hosting cell.
  System system = build_system(sc, true);
  const std::string host =
      sc.cells.cells.empty() ? system.cells().begin()->first : sc.cells.cells.front().id;

  anc::Controller controller(cfg);
  json curve = json::array();
  json presentations = json::array();
  std::map<std::string, std::size_t> behavior_of;  // signal -> behavior learnt for it
  std::size_t global_step = 0;
  for (const auto& pj : e.at("presentations")) {
    const std::string name = pj.get<std::string>();
    const auto& samples = signals.at(name);
    std::size_t selected_steps = 0, correct_steps = 0;
    double max_selected_error = 0.0;
    for (std::size_t s = 0; s < steps; ++s, ++global_step) {
      const anc::Vec& ctx = samples[s % samples.size()];
      const anc::Vec& next = samples[(s + 1) % samples.size()];
      const auto res = controller.step(ctx, next);
      if (res.trained) {
        const auto& fresh = controller.library().back();
        behavior_of.emplace(name, fresh.id);
        const ResourceAddress addr{host, Kind::L, "anc_behavior_" + std::to_string(fresh.id)};
        json w{{"input_width", fresh.net.input_width()},
               {"hidden_width", fresh.net.hidden_width()},
               {"output_width", fresh.net.output_width()},
               {"w1", fresh.net.w1()}, {"b1", fresh.net.b1()},
               {"w2", fresh.net.w2()}, {"b2", fresh.net.b2()}};
        system.supervisor_interaction(
            host, Interaction{system.cell(host).has(addr) ? Op::update : Op::create, addr,
                              Value::text(w.dump())},
            system.sim().now() + 1);
        system.run();
      }
      if (res.selected) {
        ++selected_steps;
        max_selected_error = std::max(max_selected_error, res.selected_error);
        auto it = behavior_of.find(name);
        if (it != behavior_of.end() && *res.selected == it->second) ++correct_steps;
      }
      curve.push_back({{"step", global_step},
                       {"signal", name},
                       {"selected", res.selected ? json(*res.selected) : json(nullptr)},
                       {"error", res.selected ? json(res.selected_error) : json(nullptr)},
                       {"library", controller.library().size()},
                       {"collecting", controller.collecting()}});
    }
    auto known = behavior_of.find(name);
    presentations.push_back(
        {{"signal", name},
         {"selected_steps", selected_steps},
         {"correct_steps", correct_steps},
         {"selection_accuracy",
          selected_steps ? static_cast<double>(correct_steps) / static_cast<double>(selected_steps)
                         : 0.0},
         {"max_selected_error", max_selected_error},
         {"behavior", known != behavior_of.end() ? json(known->second) : json(nullptr)}});
  }
  bundle.report = {{"module", "anc"},
                   {"behaviors", controller.library().size()},
                   {"presentations", presentations}};
  std::string curve_csv = "step,signal,selected,error,library,collecting\n";
  for (const auto& row : curve) {
    curve_csv += std::to_string(row.at("step").get<std::size_t>());
    curve_csv += ',';
    curve_csv += row.at("signal").get<std::string>();
    curve_csv += ',';
    curve_csv += row.at("selected").is_null() ? "" : std::to_string(row.at("selected").get<std::size_t>());
    curve_csv += ',';
    curve_csv += row.at("error").is_null() ? "" : format_real(row.at("error").get<double>());
    curve_csv += ',';
    curve_csv += std::to_string(row.at("library").get<std::size_t>());
    curve_csv += ',';
    curve_csv += row.at("collecting").get<bool>() ? "1" : "0";
    curve_csv += '\n';
  }
  bundle.extra_files["learning_curve.csv"] = curve_csv;
  fill_common(bundle, sc, system);
  return bundle;
}

inline vp::FaultConfig parse_faults(const json& fj, std::uint64_t seed) {
  vp::FaultConfig faults;
  faults.seed = seed;
  if (fj.contains("loss_prob")) faults.loss_prob = fj.at("loss_prob").get<double>();
  if (fj.contains("switch_period")) faults.switch_period = fj.at("switch_period").get<int>();
  if (fj.contains("topologies")) {
    detail::Validator v;
    int i = 0;
    for (const auto& tj : fj.at("topologies"))
      faults.topologies.push_back(
          parse_topology_spec(tj, "$.experiment.faults.topologies[" + std::to_string(i++) + "]", v)
              .build(seed));
    if (!v.issues.empty()) throw ValidationError(std::move(v.issues));
  }
  return faults;
}

inline TraceBundle run_vote_experiment(const Scenario& sc) {
  TraceBundle bundle;
  const json& e = sc.experiment;
  if (!sc.topology) throw ValidationError({"vote experiments need a topology"});
  const Topology topology = sc.topology->build(sc.seed);

  vp::VoteParams params;
  if (e.contains("eps")) params.eps = e.at("eps").get<double>();
  if (e.contains("tolerance")) params.tolerance = e.at("tolerance").get<double>();
  if (e.contains("delta")) params.delta = e.at("delta").get<double>();
  if (e.contains("max_iters")) params.max_iters = e.at("max_iters").get<std::uint64_t>();
  if (e.contains("max_rounds")) params.max_rounds = e.at("max_rounds").get<int>();

  std::optional<vp::FaultConfig> faults;
  if (e.contains("faults")) faults = parse_faults(e.at("faults"), sc.seed);

  json report{{"module", "voting"}};
  if (e.contains("profile")) {
    vp::Profile profile;
    for (const auto& row : e.at("profile")) profile.push_back(row.get<std::vector<double>>());
    const auto outcome =
        vp::vote(profile, topology, params, faults ? &*faults : nullptr);
    json oj{{"resolved", outcome.resolved},
            {"rounds", outcome.rounds},
            {"iterations", outcome.iterations},
            {"aggregated", outcome.aggregated}};
    if (outcome.resolved) {
      oj["winner"] = outcome.winner;
      oj["all_nodes_agree"] = outcome.all_nodes_agree;
    } else {
      oj["unresolved_set"] = outcome.unresolved_set;
      bundle.verdict = 3;
    }
    report["outcome"] = oj;
    bundle.extra_files["outcome.json"] = oj.dump(2) + "\n";

    if (e.contains("compiled") && e.at("compiled").get<bool>()) {
      const auto compiled = vp::compile_vp_to_sc(profile, topology);
      System system(topology, sc.link, sc.seed);
      for (const auto& node : topology.nodes) system.add_cell(node);
      system.load(compiled.choreography);
      for (const auto& addr : compiled.start_addresses)
        system.inject(addr, Value::boolean(true), 1);
      system.run();
      json winners = json::object();
      bool agree = outcome.resolved;
      for (const auto& cell_id : compiled.cells) {
        const auto w = vp::compiled_winner(system.cell(cell_id), compiled.candidates);
        winners[cell_id] = w ? json(*w) : json(nullptr);
        if (!w || (outcome.resolved && *w != outcome.winner)) agree = false;
      }
      report["compiled"] = {{"winners", winners}, {"agrees_with_library", agree}};
      if (!agree) bundle.verdict = 3;
    }
  }

  if (e.contains("bench")) {
    const json& bj = e.at("bench");
    const std::size_t seeds = bj.at("seeds").get<std::size_t>();
    const std::size_t k = bj.contains("candidates") ? bj.at("candidates").get<std::size_t>() : 10;
    std::string csv = "topology,seed,iterations,winner\n";
    detail::Validator v;
    std::vector<std::pair<std::string, TopologySpec>> specs;
    int ti = 0;
    for (const auto& tj : bj.at("topologies")) {
      auto spec = parse_topology_spec(tj, "$.experiment.bench.topologies[" + std::to_string(ti++) + "]", v);
      specs.push_back({spec.kind, std::move(spec)});
    }
    if (!v.issues.empty()) throw ValidationError(std::move(v.issues));
    for (const auto& [label, spec] : specs) {
      for (std::size_t s = 0; s < seeds; ++s) {
        const std::uint64_t seed = sc.seed + s;
        const Topology t = spec.build(seed);
        Rng rng(seed, "bench_profile");
        vp::Profile profile(static_cast<std::size_t>(t.size()), std::vector<double>(k));
        for (auto& row : profile)
          for (auto& u : row) u = rng.uniform_real();
        const auto outcome = vp::vote(profile, t, params);
        csv += label + "," + std::to_string(seed) + "," +
               std::to_string(outcome.iterations.empty() ? 0 : outcome.iterations.front()) + "," +
               (outcome.resolved ? std::to_string(outcome.winner) : std::string("unresolved")) +
               "\n";
      }
    }
    bundle.extra_files["bench.csv"] = csv;
    report["bench"] = "bench.csv";
  }

  bundle.report = report;
  return bundle;
}

}  // namespace detail

inline TraceBundle run_scenario(const Scenario& sc) {
  TraceBundle bundle;
  try {
    if (sc.experiment_type == "flow") bundle = detail::run_flow_experiment(sc);
    else if (sc.experiment_type == "petri") bundle = detail::run_petri_experiment(sc);
    else if (sc.experiment_type == "deploy") bundle = detail::run_deploy_experiment(sc);
    else if (sc.experiment_type == "anc") bundle = detail::run_anc_experiment(sc);
    else if (sc.experiment_type == "vote") bundle = detail::run_vote_experiment(sc);
    else throw ValidationError({"unknown experiment type '" + sc.experiment_type + "'"});
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw Error("scenario '" + sc.name + "': " + e.what());
  }
  bundle.metadata = {{"scenario", sc.name},
                     {"seed", sc.seed},
                     {"experiment", sc.experiment_type},
                     {"version", kVersion}};
  return bundle;
}

/// Writes the bundle under stable names; re-export over the same directory is
/// idempotent. Exported files carry no volatile data (timestamps, wall time)
/// so equal runs produce byte-identical trees.
inline void export_bundle(const TraceBundle& bundle, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "'");
  const auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(fs::path(out_dir) / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + name + "' in '" + out_dir + "'");
    out << content;
  };
  write("metadata.json", bundle.metadata.dump(2) + "\n");
  write("report.json", bundle.report.dump(2) + "\n");
  write("events.csv", bundle.events_csv);
  write("messages.csv", bundle.messages_csv);
  std::string flows;
  for (const auto& line : bundle.flow_lines) flows += line.dump() + "\n";
  write("flows.jsonl", flows);
  for (const auto& [name, content] : bundle.extra_files) write(name, content);
}

}  // namespace orgami::scen
