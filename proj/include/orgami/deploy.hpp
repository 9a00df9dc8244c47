#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "orgami/engine.hpp"

namespace orgami::deploy {

// ---------------------------------------------------------------------------
// Metabolic mapping: instantiate a choreography for a WSAN target, solve the
// placement problem exactly, then deploy either by direct supervisor writes
// or through a composed DNA/Matroska agent.
// ---------------------------------------------------------------------------

struct Target {
  Topology topology;
  std::map<std::string, int> capacity;          // node -> max resident resources; absent = unlimited
  std::map<std::string, std::string> bindings;  // logical /S/ address -> node name

  int capacity_of(const std::string& node) const {
    auto it = capacity.find(node);
    return it == capacity.end() ? std::numeric_limits<int>::max() : it->second;
  }
};

struct Instance {
  std::string id;  // logical address string, e.g. "c0/L/p0"
  Kind kind = Kind::L;
  bool pinned = false;
  std::string pin_node;
};

struct InstGraph {
  std::vector<Instance> vertices;  // sorted by id
  std::map<std::pair<std::size_t, std::size_t>, double> edges;  // i < j, weight > 0

  std::size_t index_of(const std::string& id) const {
    for (std::size_t i = 0; i < vertices.size(); ++i)
      if (vertices[i].id == id) return i;
    throw NotFound("no instance '" + id + "'");
  }

  void add_weight(std::size_t i, std::size_t j, double w) {
    if (i == j || w <= 0) return;
    if (i > j) std::swap(i, j);
    edges[{i, j}] += w;
  }
};

/// One vertex per instantiated resource; /S/ vertices pinned through the
/// target's bindings. Edge weights are static action counts: one unit per
/// rule action linking the rule to its target resource.
inline InstGraph build_instantiation_graph(const Choreography& choreo, const Target& target) {
  InstGraph g;
  std::map<std::string, std::size_t> index;
  for (const auto& cs : choreo.cells) {
    for (const auto& rs : cs.resources) {
      Instance inst;
      inst.id = rs.address(cs.id).str();
      inst.kind = rs.kind;
      if (rs.kind == Kind::S) {
        auto b = target.bindings.find(inst.id);
        if (b == target.bindings.end())
          throw UnboundSensor("/S/ resource '" + inst.id + "' has no binding on the target");
        inst.pinned = true;
        inst.pin_node = b->second;
        target.topology.index_of(inst.pin_node);  // validates the node exists
      }
      g.vertices.push_back(std::move(inst));
    }
  }
  std::sort(g.vertices.begin(), g.vertices.end(),
            [](const Instance& a, const Instance& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    if (!index.emplace(g.vertices[i].id, i).second)
      throw AddressConflict("duplicate instance '" + g.vertices[i].id + "'");
  }
  for (const auto& cs : choreo.cells) {
    for (const auto& rs : cs.resources) {
      if (rs.kind != Kind::A) continue;
      AgentRule rule = parse_rule(rs.value.as_text());
      rule.host_cell = cs.id;
      const std::size_t self = index.at(rs.address(cs.id).str());
      for (const auto& action : rule.actions) {
        auto it = index.find(action.target.resolve(cs.id).str());
        if (it == index.end()) continue;  // dynamically created target: no static traffic edge
        g.add_weight(self, it->second, 1.0);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// PBO formulation and exact solving
// ---------------------------------------------------------------------------

/// Placement problem over binary variables x_{r,v} ("resource r on node v"):
/// one node per resource, pinned equalities, per-node capacity, objective =
/// sum over instance edges of weight x hop distance between chosen nodes.
/// The structured fields drive the solver; the OPB export linearizes the
/// quadratic terms with and-variables.
struct PBOInstance {
  InstGraph graph;
  Target target;
  std::vector<std::string> node_order;        // nodes in ascending name order
  std::vector<std::vector<int>> dist;         // hop distance by node_order index
  std::vector<std::size_t> free_vertices;     // vertex indices, ascending id order
  std::vector<int> pinned_node;               // per vertex: node_order index or -1

  std::size_t variable_count() const { return free_vertices.size() * node_order.size(); }
};

inline PBOInstance formulate_pbo(const InstGraph& graph, const Target& target) {
  PBOInstance inst;
  inst.graph = graph;
  inst.target = target;
  inst.node_order = target.topology.nodes;
  std::sort(inst.node_order.begin(), inst.node_order.end());
  const int n = static_cast<int>(inst.node_order.size());
  std::vector<int> to_topo(n);
  for (int i = 0; i < n; ++i) to_topo[i] = target.topology.index_of(inst.node_order[i]);
  inst.dist.assign(n, std::vector<int>(n, 0));
  for (int i = 0; i < n; ++i) {
    const auto d = target.topology.distances_from(to_topo[i]);
    for (int j = 0; j < n; ++j)
      inst.dist[i][j] = d[to_topo[j]] < 0 ? 1'000'000 : d[to_topo[j]];
  }
  inst.pinned_node.assign(graph.vertices.size(), -1);
  for (std::size_t v = 0; v < graph.vertices.size(); ++v) {
    if (graph.vertices[v].pinned) {
      const auto it =
          std::find(inst.node_order.begin(), inst.node_order.end(), graph.vertices[v].pin_node);
      inst.pinned_node[v] = static_cast<int>(it - inst.node_order.begin());
    } else {
      inst.free_vertices.push_back(v);
    }
  }
  return inst;
}

struct Mapping {
  std::map<std::string, std::string> assignment;  // instance id -> node name
  double objective = 0.0;
};

namespace detail {

struct SearchCtx {
  const PBOInstance* inst = nullptr;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;  // vertex -> (vertex, weight)
  std::vector<int> assign;      // node index per vertex, -1 undecided
  std::vector<int> usage;       // per node
  std::vector<int> cap;         // per node, pinned usage already deducted from capacity? no: counted in usage
  std::vector<int> best_assign;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;

  double edge_cost(std::size_t a, std::size_t b, double w) const {
    return w * inst->dist[assign[a]][assign[b]];
  }

  /// Admissible bound: exact cost of decided pairs plus, for every undecided
  /// vertex, its cheapest possible attachment to the already decided ones.
  double lower_bound(double decided_cost, std::size_t next_free) const {
    double bound = decided_cost;
    const auto& free = inst->free_vertices;
    for (std::size_t k = next_free; k < free.size(); ++k) {
      const std::size_t r = free[k];
      double best_attach = std::numeric_limits<double>::infinity();
      bool any = false;
      for (std::size_t v = 0; v < inst->node_order.size(); ++v) {
        double c = 0;
        for (const auto& [s, w] : adj[r])
          if (assign[s] >= 0) {
            c += w * inst->dist[v][assign[s]];
            any = true;
          }
        best_attach = std::min(best_attach, c);
      }
      if (any) bound += best_attach;
    }
    return bound;
  }

  void dfs(std::size_t k, double cost) {
    const auto& free = inst->free_vertices;
    if (k == free.size()) {
      if (cost < best) {
        best = cost;
        best_assign = assign;
        found = true;
      }
      return;
    }
    const std::size_t r = free[k];
    for (std::size_t v = 0; v < inst->node_order.size(); ++v) {
      if (usage[v] >= cap[v]) continue;
      assign[r] = static_cast<int>(v);
      double added = 0;
      for (const auto& [s, w] : adj[r])
        if (assign[s] >= 0 && s != r) added += edge_cost(r, s, w);
      const double next_cost = cost + added;
      if (lower_bound(next_cost, k + 1) < best || !found) {
        usage[v] += 1;
        dfs(k + 1, next_cost);
        usage[v] -= 1;
      }
      assign[r] = -1;
    }
  }
};

inline SearchCtx make_ctx(const PBOInstance& inst) {
  SearchCtx ctx;
  ctx.inst = &inst;
  const std::size_t nv = inst.graph.vertices.size();
  const std::size_t nn = inst.node_order.size();
  ctx.adj.assign(nv, {});
  for (const auto& [e, w] : inst.graph.edges) {
    ctx.adj[e.first].push_back({e.second, w});
    ctx.adj[e.second].push_back({e.first, w});
  }
  ctx.assign.assign(nv, -1);
  ctx.usage.assign(nn, 0);
  ctx.cap.assign(nn, 0);
  for (std::size_t v = 0; v < nn; ++v) ctx.cap[v] = inst.target.capacity_of(inst.node_order[v]);
  for (std::size_t r = 0; r < nv; ++r) {
    if (inst.pinned_node[r] >= 0) {
      ctx.assign[r] = inst.pinned_node[r];
      ctx.usage[inst.pinned_node[r]] += 1;
      if (ctx.usage[inst.pinned_node[r]] > ctx.cap[inst.pinned_node[r]])
        throw Infeasible("pinned resources exceed capacity of node '" +
                         inst.node_order[inst.pinned_node[r]] + "'");
    }
  }
  return ctx;
}

inline Mapping extract(const SearchCtx& ctx) {
  if (!ctx.found) throw Infeasible("no feasible placement under the given capacities");
  Mapping m;
  m.objective = ctx.best;
  for (std::size_t r = 0; r < ctx.inst->graph.vertices.size(); ++r)
    m.assignment[ctx.inst->graph.vertices[r].id] = ctx.inst->node_order[ctx.best_assign[r]];
  return m;
}

}  // namespace detail

/// Exact branch-and-bound. Free resources are decided in ascending id order
/// and nodes tried in ascending name order with strict improvement only, so
/// among optima the lexicographically smallest assignment wins.
inline Mapping solve_pbo(const PBOInstance& inst) {
  auto ctx = detail::make_ctx(inst);
  // Pinned-only cost is a constant; include it so objectives are comparable.
  double base = 0;
  for (const auto& [e, w] : inst.graph.edges)
    if (inst.pinned_node[e.first] >= 0 && inst.pinned_node[e.second] >= 0)
      base += w * inst.dist[inst.pinned_node[e.first]][inst.pinned_node[e.second]];
  // The DFS accumulates pairwise costs as vertices become decided; pinned
  // pairs are decided from the start, so seed with their cost and skip
  // recounting: adj contributions between two pinned vertices never enter
  // `added` because neither is in free_vertices.
  ctx.best_assign = ctx.assign;
  ctx.dfs(0, base);
  return detail::extract(ctx);
}

/// Exhaustive enumeration oracle with the same ordering and tie-break.
inline Mapping brute_force_mapping(const InstGraph& graph, const Target& target) {
  const PBOInstance inst = formulate_pbo(graph, target);
  const std::size_t nn = inst.node_order.size();
  const std::size_t nf = inst.free_vertices.size();
  double space = 1;
  for (std::size_t i = 0; i < nf; ++i) {
    space *= static_cast<double>(nn);
    if (space > 1e7) throw TooLarge("brute-force search space exceeds 10^7 candidates");
  }
  auto ctx = detail::make_ctx(inst);
  double base = 0;
  for (const auto& [e, w] : inst.graph.edges)
    if (inst.pinned_node[e.first] >= 0 && inst.pinned_node[e.second] >= 0)
      base += w * inst.dist[inst.pinned_node[e.first]][inst.pinned_node[e.second]];

  std::vector<std::size_t> odo(nf, 0);
  while (true) {
    bool feasible = true;
    std::vector<int> usage = ctx.usage;
    for (std::size_t k = 0; k < nf && feasible; ++k) {
      const std::size_t v = odo[k];
      usage[v] += 1;
      if (usage[v] > ctx.cap[v]) feasible = false;
    }
    if (feasible) {
      for (std::size_t k = 0; k < nf; ++k) ctx.assign[inst.free_vertices[k]] = static_cast<int>(odo[k]);
      double cost = base;
      for (const auto& [e, w] : inst.graph.edges) {
        if (inst.pinned_node[e.first] >= 0 && inst.pinned_node[e.second] >= 0) continue;
        cost += w * inst.dist[ctx.assign[e.first]][ctx.assign[e.second]];
      }
      if (cost < ctx.best) {
        ctx.best = cost;
        ctx.best_assign = ctx.assign;
        ctx.found = true;
      }
    }
    if (nf == 0) break;
    std::size_t k = nf;
    while (k > 0 && ++odo[k - 1] == nn) {
      odo[k - 1] = 0;
      --k;
    }
    if (k == 0) break;
  }
  return detail::extract(ctx);
}

/// OPB export (pseudo-Boolean competition syntax), quadratic distance terms
/// linearized with and-variables.
inline std::string to_opb(const PBOInstance& inst) {
  const std::size_t nn = inst.node_order.size();
  const auto var = [&](std::size_t free_pos, std::size_t node) {
    return "x" + std::to_string(1 + free_pos * nn + node);
  };
  std::map<std::size_t, std::size_t> free_pos;  // vertex -> position among free
  for (std::size_t k = 0; k < inst.free_vertices.size(); ++k)
    free_pos[inst.free_vertices[k]] = k;

  std::vector<std::string> constraints;
  std::string objective;
  double constant = 0;
  std::size_t next_aux = 1 + inst.variable_count();

  const auto coeff = [](double w) {
    const long long c = static_cast<long long>(std::llround(w));
    return (c >= 0 ? "+" : "") + std::to_string(c);
  };

  for (const auto& [e, w] : inst.graph.edges) {
    const int pa = inst.pinned_node[e.first], pb = inst.pinned_node[e.second];
    if (pa >= 0 && pb >= 0) {
      constant += w * inst.dist[pa][pb];
    } else if (pa >= 0 || pb >= 0) {
      const std::size_t fr = pa >= 0 ? e.second : e.first;
      const int pin = pa >= 0 ? pa : pb;
      for (std::size_t v = 0; v < nn; ++v) {
        const double c = w * inst.dist[v][pin];
        if (c > 0) objective += " " + coeff(c) + " " + var(free_pos[fr], v);
      }
    } else {
      for (std::size_t u = 0; u < nn; ++u) {
        for (std::size_t v = 0; v < nn; ++v) {
          const double c = w * inst.dist[u][v];
          if (c <= 0) continue;
          const std::string y = "x" + std::to_string(next_aux++);
          const std::string x1 = var(free_pos[e.first], u), x2 = var(free_pos[e.second], v);
          objective += " " + coeff(c) + " " + y;
          constraints.push_back("+1 " + x1 + " -1 " + y + " >= 0 ;");
          constraints.push_back("+1 " + x2 + " -1 " + y + " >= 0 ;");
          constraints.push_back("+1 " + y + " -1 " + x1 + " -1 " + x2 + " >= -1 ;");
        }
      }
    }
  }
  for (std::size_t k = 0; k < inst.free_vertices.size(); ++k) {
    std::string c;
    for (std::size_t v = 0; v < nn; ++v) c += "+1 " + var(k, v) + " ";
    constraints.push_back(c + "= 1 ;");
  }
  for (std::size_t v = 0; v < nn; ++v) {
    const int cap = inst.target.capacity_of(inst.node_order[v]);
    if (cap == std::numeric_limits<int>::max()) continue;
    int pinned_here = 0;
    for (int p : inst.pinned_node)
      if (p == static_cast<int>(v)) ++pinned_here;
    std::string c;
    for (std::size_t k = 0; k < inst.free_vertices.size(); ++k) c += "-1 " + var(k, v) + " ";
    constraints.push_back(c + ">= " + std::to_string(-(cap - pinned_here)) + " ;");
  }

  std::string out = "* #variable= " + std::to_string(next_aux - 1) +
                    " #constraint= " + std::to_string(constraints.size()) + "\n";
  if (constant > 0) out += "* constant objective offset: " + format_real(constant) + "\n";
  out += "min:" + (objective.empty() ? std::string(" ") : objective) + " ;\n";
  for (const auto& c : constraints) out += c + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Deployment
// ---------------------------------------------------------------------------

namespace detail {

inline std::string mangle(const ResourceAddress& logical) {
  return logical.cell + "_" + logical.name;
}

/// Rewrites a logical rule for its physical placement: every reference or
/// target that names a mapped resource is renamed to node/KIND/mangled, bare
/// when co-located with the rule. PRE references stay host-relative (the rule
/// language requires it); a mapping that separates a rule from its PRE inputs
/// yields a rule that cannot fire, which the placement objective discourages.
inline RefAddr rewrite_ref(const RefAddr& r, const std::string& logical_host,
                           const std::string& physical_host, const Mapping& mapping,
                           bool force_host) {
  const ResourceAddress logical = r.resolve(logical_host);
  auto it = mapping.assignment.find(logical.str());
  if (it == mapping.assignment.end()) return r;  // dynamic target: leave untouched
  RefAddr out;
  out.kind = r.kind;
  out.name = mangle(logical);
  if (!force_host && it->second != physical_host) out.cell = it->second;
  return out;
}

inline ExprPtr rewrite_expr(const ExprPtr& e, const std::string& logical_host,
                            const std::string& physical_host, const Mapping& mapping,
                            bool force_host) {
  if (!e) return e;
  using NK = Expr::NodeKind;
  switch (e->node) {
    case NK::literal: return e;
    case NK::reference:
      return Expr::reference(rewrite_ref(e->ref, logical_host, physical_host, mapping, force_host));
    case NK::prev:
      return Expr::prev(rewrite_ref(e->ref, logical_host, physical_host, mapping, force_host));
    case NK::exists:
    case NK::exists_prev:
      return Expr::exists(rewrite_ref(e->ref, logical_host, physical_host, mapping, force_host),
                          e->node == NK::exists_prev);
    case NK::negate:
      return Expr::negate(rewrite_expr(e->lhs, logical_host, physical_host, mapping, force_host));
    case NK::logical_not:
      return Expr::logical_not(
          rewrite_expr(e->lhs, logical_host, physical_host, mapping, force_host));
    case NK::binary:
      return Expr::binary(e->op,
                          rewrite_expr(e->lhs, logical_host, physical_host, mapping, force_host),
                          rewrite_expr(e->rhs, logical_host, physical_host, mapping, force_host));
  }
  return e;
}

inline std::string rewrite_rule_source(const std::string& source, const std::string& logical_host,
                                       const std::string& physical_host, const Mapping& mapping) {
  AgentRule rule = parse_rule(source);
  AgentRule out;
  for (const auto& s : rule.subscriptions)
    out.subscriptions.push_back(rewrite_ref(s, logical_host, physical_host, mapping, true));
  out.pre = rewrite_expr(rule.pre, logical_host, physical_host, mapping, true);
  for (const auto& a : rule.actions) {
    Action na;
    na.op = a.op;
    na.target = rewrite_ref(a.target, logical_host, physical_host, mapping, false);
    na.payload = rewrite_expr(a.payload, logical_host, physical_host, mapping, false);
    out.actions.push_back(std::move(na));
  }
  return render_rule(out);
}

struct PlacedResource {
  ResourceAddress physical;
  Value value;
  std::string logical_id;
};

inline std::vector<PlacedResource> physical_resources(const Choreography& choreo,
                                                      const Mapping& mapping) {
  std::vector<PlacedResource> out;
  for (const auto& cs : choreo.cells) {
    for (const auto& rs : cs.resources) {
      const ResourceAddress logical = rs.address(cs.id);
      auto it = mapping.assignment.find(logical.str());
      if (it == mapping.assignment.end())
        throw InvalidParams("mapping does not cover '" + logical.str() + "'");
      PlacedResource pr;
      pr.logical_id = logical.str();
      pr.physical = ResourceAddress{it->second, rs.kind, mangle(logical)};
      pr.value = rs.kind == Kind::A
                     ? Value::text(rewrite_rule_source(rs.value.as_text(), cs.id, it->second, mapping))
                     : rs.value;
      out.push_back(std::move(pr));
    }
  }
  std::sort(out.begin(), out.end(), [](const PlacedResource& a, const PlacedResource& b) {
    return a.logical_id < b.logical_id;
  });
  return out;
}

}  // namespace detail

struct ComposedDna {
  std::string name;    // /A/ resource name for the DNA itself
  std::string source;  // nested Matroska rule text
};

/// One nested rule which, fired on any cell, creates a deployer agent on
/// every target node; each deployer creates its node's resources and then
/// deletes itself, and the DNA deletes itself after spawning the deployers.
inline ComposedDna compose_dna(const Choreography& choreo, const Mapping& mapping,
                               const std::string& dna_name = "dna") {
  const auto placed = detail::physical_resources(choreo, mapping);
  std::map<std::string, std::vector<const detail::PlacedResource*>> by_node;
  for (const auto& pr : placed) by_node[pr.physical.cell].push_back(&pr);

  std::string dna_body;
  for (const auto& [node, resources] : by_node) {
    const std::string child_name = "dna_child_" + node;
    std::string child = "IF true THEN ";
    for (const auto* pr : resources) {
      child += "CREATE self/";
      child += kind_char(pr->physical.kind);
      child += '/';
      child += pr->physical.name;
      child += " = ";
      child += render_value(pr->value);
      child += "; ";
    }
    child += "DELETE self/A/" + child_name;
    dna_body += "CREATE " + node + "/A/" + child_name + " = " + escape_text(child) + "; ";
  }
  dna_body += "DELETE self/A/" + dna_name;
  return ComposedDna{dna_name, "IF true THEN " + dna_body};
}

enum class Strategy { direct, dna };

struct DeployReport {
  std::map<std::string, std::string> placement;  // logical id -> node actually holding it
  std::map<std::string, std::set<std::string>> node_contents;  // node -> physical addresses
  bool complete = false;
  bool timeout = false;
};

/// Executes a deployment on a running system whose cells are the target
/// nodes. Both strategies yield identical final placements on a lossless
/// network; under loss the run is bounded by `budget` ticks and the report
/// flags a timeout with the partial placement.
inline DeployReport deploy(Strategy strategy, const Choreography& choreo, const Mapping& mapping,
                           System& system, const std::string& inject_cell, SimTime budget = 10'000) {
  const auto placed = detail::physical_resources(choreo, mapping);
  const SimTime start = system.sim().now() + 1;
  if (strategy == Strategy::direct) {
    for (const auto& pr : placed)
      system.supervisor_interaction(inject_cell,
                                    Interaction{Op::create, pr.physical, pr.value}, start);
  } else {
    const ComposedDna dna = compose_dna(choreo, mapping);
    system.supervisor_interaction(
        inject_cell,
        Interaction{Op::create, ResourceAddress{inject_cell, Kind::A, dna.name},
                    Value::text(dna.source)},
        start);
  }
  system.run_until(start + budget);

  DeployReport report;
  report.timeout = !system.sim().idle();
  for (const auto& pr : placed) {
    bool found = false;
    for (const auto& [cell_id, cell] : system.cells()) {
      if (cell.has(ResourceAddress{cell_id, pr.physical.kind, pr.physical.name})) {
        report.placement[pr.logical_id] = cell_id;
        found = true;
        break;
      }
    }
    if (!found) report.timeout = true;
  }
  report.complete = report.placement.size() == placed.size();
  if (!report.complete) report.timeout = true;
  for (const auto& [cell_id, cell] : system.cells())
    for (const auto& [addr, res] : cell.resources())
      report.node_contents[cell_id].insert(addr.str());
  return report;
}

}  // namespace orgami::deploy
