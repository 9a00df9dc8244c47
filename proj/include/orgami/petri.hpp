#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "orgami/engine.hpp"

namespace orgami::petri {

// ---------------------------------------------------------------------------
// Adapted Petri net: one place per /L/ and /S/ resource, one transition per
// /A/ rule, and one agent-place paired with each transition (the rule's own
// /A/ address), so rules are themselves mutable resources. Markings are full
// valuations rather than token counts because rules compute arithmetic on
// place values.
//
// A firing step of the net equals one agent-evaluation round of the engine:
// the woken transitions are determined by the addresses mutated in the
// previous step, guards and payloads are evaluated against the step-start
// marking, and the emitted writes are applied in ascending rule-id order.
// ---------------------------------------------------------------------------

struct PetriNet {
  struct Place {
    ResourceAddress addr;
    std::optional<Value> initial;
    std::string direction;  // "in" marks a sensor-bound /S/ place
  };
  struct Transition {
    ResourceAddress agent_place;
    AgentRule rule;
    std::set<ResourceAddress> watch;
    std::string source;  // original rule text; template for re-creation
  };

  std::map<ResourceAddress, Place> places;            // value places only
  std::map<ResourceAddress, Transition> transitions;  // keyed by agent place
};

namespace detail {

inline void reject_prev(const ExprPtr& e, const std::string& where) {
  if (e && uses_prev(e))
    throw UntranslatableRule("rule " + where +
                             " uses prev(); encode memory as an explicit /L/ place instead");
}

}  // namespace detail

/// Translates a service choreography into the adapted net. Rules using
/// `prev()` are rejected; self-rewriting is limited to deleting declared
/// rules and re-creating them from their literal source text.
inline PetriNet sc_to_petri(const Choreography& choreo) {
  PetriNet net;
  for (const auto& cs : choreo.cells) {
    for (const auto& rs : cs.resources) {
      const ResourceAddress addr = rs.address(cs.id);
      if (rs.kind == Kind::A) {
        PetriNet::Transition tr;
        tr.agent_place = addr;
        tr.source = rs.value.as_text();
        tr.rule = parse_rule(tr.source);
        tr.rule.id = addr.str();
        tr.rule.host_cell = cs.id;
        detail::reject_prev(tr.rule.pre, tr.rule.id);
        for (const auto& action : tr.rule.actions) detail::reject_prev(action.payload, tr.rule.id);
        tr.watch = wake_set(tr.rule);
        net.transitions.emplace(addr, std::move(tr));
      } else {
        net.places.emplace(addr, PetriNet::Place{addr, rs.value, rs.direction});
      }
    }
  }
  // Addresses the rules reference or write but the choreography does not
  // declare are still part of the modeled state: add them as places with an
  // absent initial marking (they come into existence at runtime).
  for (const auto& [addr, tr] : net.transitions) {
    std::vector<RefAddr> refs;
    collect_refs(tr.rule.pre, refs);
    for (const auto& s : tr.rule.subscriptions) refs.push_back(s);
    for (const auto& action : tr.rule.actions) {
      if (action.payload) collect_refs(action.payload, refs);
      if (action.target.kind != Kind::A) refs.push_back(action.target);
    }
    for (const auto& r : refs) {
      if (r.kind == Kind::A) continue;
      const ResourceAddress resolved = r.resolve(tr.rule.host_cell);
      if (!net.places.count(resolved))
        net.places.emplace(resolved, PetriNet::Place{resolved, std::nullopt, ""});
    }
  }
  // Actions that create /A/ resources must re-instantiate a declared rule
  // from its literal source (the static-template restriction).
  for (const auto& [addr, tr] : net.transitions) {
    for (const auto& action : tr.rule.actions) {
      if (action.target.kind != Kind::A || action.op == Op::remove) continue;
      const ResourceAddress target = action.target.resolve(tr.rule.host_cell);
      auto decl = net.transitions.find(target);
      if (action.payload->node != Expr::NodeKind::literal || !action.payload->lit.is_text() ||
          decl == net.transitions.end())
        throw UntranslatableRule("rule " + tr.rule.id +
                                 " synthesizes a rule at runtime; analysis supports only "
                                 "re-creation of declared rules from literal source");
      AgentRule recreated = parse_rule(action.payload->lit.as_text());
      if (!rule_equal(recreated, decl->second.rule))
        throw UntranslatableRule("rule " + tr.rule.id + " re-creates '" + target.str() +
                                 "' with a different body than declared");
    }
  }
  return net;
}

// ---------------------------------------------------------------------------
// State space exploration
// ---------------------------------------------------------------------------

struct IntDomain {
  std::int64_t lo = 0, hi = 0;
};

struct InputSpec {
  bool is_domain = false;
  IntDomain domain;
  std::vector<Value> sequence;
};

struct ExploreLimits {
  std::size_t max_states = 100000;
  std::map<ResourceAddress, InputSpec> inputs;
  std::map<ResourceAddress, IntDomain> domains;
  std::optional<IntDomain> default_domain;
};

/// Canonical serialization of a cell-state valuation (value places plus the
/// live rule set); the engine-side equivalence harness produces the same
/// format from actual cells.
inline std::string valuation_key(const std::map<ResourceAddress, Value>& values,
                                 const std::set<ResourceAddress>& live) {
  std::string k;
  for (const auto& [a, v] : values) {
    k += a.str();
    k += '=';
    k += static_cast<char>('0' + static_cast<int>(v.type()));
    k += v.str();
    k += ';';
  }
  k += '|';
  for (const auto& a : live) {
    k += a.str();
    k += ';';
  }
  return k;
}

struct Marking {
  std::map<ResourceAddress, Value> values;  // present value places
  std::set<ResourceAddress> live;           // live agent places
  std::map<ResourceAddress, std::optional<Value>> batch;  // last step's mutations -> prev values
  std::map<ResourceAddress, std::size_t> input_pos;

  bool quiescent() const { return batch.empty(); }

  std::string key() const {
    std::string k = valuation_key();
    k += '|';
    for (const auto& [a, v] : batch) {
      k += a.str();
      k += '=';
      if (v) {
        k += static_cast<char>('0' + static_cast<int>(v->type()));
        k += v->str();
      } else {
        k += '~';
      }
      k += ';';
    }
    k += '|';
    for (const auto& [a, p] : input_pos) {
      k += a.str();
      k += ':';
      k += std::to_string(p);
      k += ';';
    }
    return k;
  }

  /// Projection compared against engine-visited states.
  std::string valuation_key() const { return petri::valuation_key(values, live); }
};

struct StateGraph {
  struct Edge {
    std::size_t from = 0, to = 0;
    std::string label;
    bool firing = false;  // true: agent round; false: environment injection
  };

  std::vector<Marking> vertices;
  std::vector<Edge> edges;
  bool complete = true;
  std::string truncation_reason;
};

struct TerminationResult {
  enum class Verdict { terminates, may_not_terminate, unknown };
  Verdict verdict = Verdict::unknown;
  std::vector<std::string> witness_cycle;  // edge labels along the cycle
};

struct RangeResult {
  std::optional<Value> min, max;
  bool unknown_beyond_limit = false;
};

namespace detail {

inline Marking initial_marking(const PetriNet& net) {
  Marking m;
  for (const auto& [addr, place] : net.places)
    if (place.initial) m.values.emplace(addr, *place.initial);
  for (const auto& [addr, tr] : net.transitions) m.live.insert(addr);
  return m;
}

/// Snapshot view of one cell reconstructed from a marking; live agent places
/// appear as text resources so `exists(A/...)` guards behave as in the engine.
inline Snapshot cell_view(const PetriNet& net, const Marking& m, const std::string& cell) {
  Snapshot s;
  s.cell = cell;
  for (const auto& [addr, v] : m.values)
    if (addr.cell == cell) s.items.emplace(addr, Resource{addr, v, 1});
  for (const auto& addr : m.live)
    if (addr.cell == cell) {
      auto it = net.transitions.find(addr);
      s.items.emplace(addr, Resource{addr, Value::text(it->second.source), 1});
    }
  return s;
}

struct DomainCheck {
  const ExploreLimits* limits = nullptr;

  bool in_domain(const ResourceAddress& addr, const Value& v) const {
    if (v.is_bool()) return true;
    if (!v.is_int()) return false;  // exploration domains are integer ranges
    auto it = limits->domains.find(addr);
    const IntDomain* d = it != limits->domains.end() ? &it->second
                         : limits->default_domain   ? &*limits->default_domain
                                                    : nullptr;
    if (!d) return false;
    return v.as_int() >= d->lo && v.as_int() <= d->hi;
  }

  void require_declared(const PetriNet& net) const {
    for (const auto& [addr, place] : net.places) {
      if (limits->domains.count(addr) || limits->default_domain) continue;
      if (place.initial && place.initial->is_bool()) continue;
      throw DomainUnbounded("place '" + addr.str() + "' has no declared finite domain");
    }
  }
};

struct StepOutcome {
  Marking next;
  std::vector<std::string> fired;
  bool domain_escape = false;
};

/// One synchronized firing step: mirror of System::evaluation_round on the
/// marking. Guards/payloads read the step-start marking; writes apply in
/// ascending rule-id order and form the next step's wake batch.
inline StepOutcome fire_step(const PetriNet& net, const Marking& m, const DomainCheck& domains) {
  StepOutcome out;
  out.next = m;
  out.next.batch.clear();

  std::vector<const PetriNet::Transition*> woken;
  for (const auto& [addr, tr] : net.transitions) {
    if (!m.live.count(addr)) continue;
    bool wake = m.batch.count(addr) != 0;
    if (!wake)
      for (const auto& w : tr.watch)
        if (m.batch.count(w)) {
          wake = true;
          break;
        }
    if (wake) woken.push_back(&tr);
  }
  // map iteration already yields ascending agent-place order == rule-id order

  std::map<std::string, Snapshot> views;
  const auto view_of = [&](const std::string& cell) -> const Snapshot& {
    auto it = views.find(cell);
    if (it == views.end()) it = views.emplace(cell, cell_view(net, m, cell)).first;
    return it->second;
  };

  std::map<ResourceAddress, std::optional<Value>> prev;  // unused: prev() untranslatable
  const auto record = [&](const ResourceAddress& addr, std::optional<Value> old) {
    if (!out.next.batch.count(addr)) out.next.batch.emplace(addr, std::move(old));
  };

  for (const PetriNet::Transition* tr : woken) {
    const Snapshot& xn = view_of(tr->rule.host_cell);
    bool enabled = false;
    try {
      enabled = System::evaluate_pre(tr->rule, xn, &prev);
    } catch (const Error&) {
      continue;  // guard error: transition does not fire (engine records and skips)
    }
    if (!enabled) continue;

    std::map<std::string, const Snapshot*> targets;
    for (const auto& action : tr->rule.actions) {
      const std::string tc =
          action.target.host_relative() ? tr->rule.host_cell : action.target.cell;
      if (tc == tr->rule.host_cell || targets.count(tc)) continue;
      targets[tc] = &view_of(tc);
    }
    std::vector<std::string> errors;
    const auto interactions = System::fire_agent(tr->rule, xn, targets, &prev, errors);
    out.fired.push_back(tr->agent_place.str());

    for (const auto& it : interactions) {
      const ResourceAddress& target = it.target;
      if (target.kind == Kind::A) {
        const bool live = out.next.live.count(target) != 0;
        if (it.op == Op::remove) {
          if (!live) continue;  // NotFound: skipped
          auto decl = net.transitions.find(target);
          record(target, Value::text(decl->second.source));
          out.next.live.erase(target);
        } else {
          if (it.op == Op::create && live) continue;  // AddressConflict: skipped
          if (it.op == Op::update && !live) continue;
          record(target, it.op == Op::create
                             ? std::optional<Value>()
                             : Value::text(net.transitions.at(target).source));
          out.next.live.insert(target);
        }
        continue;
      }
      auto place = net.places.find(target);
      if (place == net.places.end()) continue;  // writes outside the net are not modeled
      if (place->second.direction == "in") continue;  // sensor inputs reject agent writes
      auto cur = out.next.values.find(target);
      switch (it.op) {
        case Op::create:
          if (cur != out.next.values.end()) continue;
          if (!domains.in_domain(target, *it.value)) {
            out.domain_escape = true;
            continue;
          }
          record(target, std::optional<Value>());
          out.next.values.emplace(target, *it.value);
          break;
        case Op::update:
          if (cur == out.next.values.end()) continue;
          if (!domains.in_domain(target, *it.value)) {
            out.domain_escape = true;
            continue;
          }
          record(target, cur->second);
          cur->second = *it.value;
          break;
        case Op::remove:
          if (cur == out.next.values.end()) continue;
          record(target, cur->second);
          out.next.values.erase(cur);
          break;
      }
    }
  }
  return out;
}

/// Injection of one input value (driver upsert) into a quiescent marking.
inline Marking inject(const Marking& m, const ResourceAddress& addr, const Value& v,
                      bool advance_pos) {
  Marking next = m;
  next.batch.clear();
  auto it = next.values.find(addr);
  if (it == next.values.end()) {
    next.batch.emplace(addr, std::optional<Value>());
    next.values.emplace(addr, v);
  } else {
    next.batch.emplace(addr, it->second);
    it->second = v;
  }
  if (advance_pos) next.input_pos[addr] += 1;
  return next;
}

}  // namespace detail

inline StateGraph explore_states(const PetriNet& net, const ExploreLimits& limits) {
  detail::DomainCheck domains{&limits};
  domains.require_declared(net);
  for (const auto& [addr, spec] : limits.inputs)
    if (!net.places.count(addr))
      throw InvalidParams("input spec names unknown place '" + addr.str() + "'");

  StateGraph g;
  std::map<std::string, std::size_t> index;
  const auto intern = [&](Marking m) -> std::pair<std::size_t, bool> {
    std::string k = m.key();
    auto it = index.find(k);
    if (it != index.end()) return {it->second, false};
    const std::size_t id = g.vertices.size();
    g.vertices.push_back(std::move(m));
    index.emplace(std::move(k), id);
    return {id, true};
  };

  const auto [root, fresh] = intern(detail::initial_marking(net));
  (void)fresh;
  std::deque<std::size_t> frontier{root};

  while (!frontier.empty()) {
    if (g.vertices.size() > limits.max_states) {
      g.complete = false;
      g.truncation_reason = "max_states reached";
      break;
    }
    const std::size_t cur = frontier.front();
    frontier.pop_front();
    const Marking m = g.vertices[cur];  // copy: vertex storage may reallocate

    if (!m.quiescent()) {
      auto step = detail::fire_step(net, m, domains);
      if (step.domain_escape) {
        g.complete = false;
        g.truncation_reason = "value escaped its declared domain";
        continue;
      }
      std::string label;
      for (const auto& f : step.fired) {
        if (!label.empty()) label += ',';
        label += f;
      }
      const auto [to, is_new] = intern(std::move(step.next));
      g.edges.push_back(StateGraph::Edge{cur, to, label, !step.fired.empty()});
      if (is_new) frontier.push_back(to);
      continue;
    }

    for (const auto& [addr, spec] : limits.inputs) {
      if (spec.is_domain) {
        for (std::int64_t v = spec.domain.lo; v <= spec.domain.hi; ++v) {
          const auto [to, is_new] =
              intern(detail::inject(m, addr, Value::integer(v), /*advance_pos=*/false));
          g.edges.push_back(
              StateGraph::Edge{cur, to, "inject " + addr.str() + "=" + std::to_string(v), false});
          if (is_new) frontier.push_back(to);
        }
      } else {
        const std::size_t pos = m.input_pos.count(addr) ? m.input_pos.at(addr) : 0;
        if (pos >= spec.sequence.size()) continue;
        const auto [to, is_new] =
            intern(detail::inject(m, addr, spec.sequence[pos], /*advance_pos=*/true));
        g.edges.push_back(StateGraph::Edge{
            cur, to, "inject " + addr.str() + "=" + spec.sequence[pos].str(), false});
        if (is_new) frontier.push_back(to);
      }
    }
  }
  return g;
}

inline TerminationResult check_termination(const PetriNet& net, const ExploreLimits& limits) {
  const StateGraph g = explore_states(net, limits);
  TerminationResult res;
  if (!g.complete) {
    res.verdict = TerminationResult::Verdict::unknown;
    return res;
  }
  // Cycle search restricted to firing edges: recurring environment input is
  // not divergence, a self-sustaining agent loop is.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out(g.vertices.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e)
    if (g.edges[e].firing) out[g.edges[e].from].push_back({g.edges[e].to, e});
  std::vector<int> state(g.vertices.size(), 0);  // 0 unseen, 1 on stack, 2 done
  std::vector<std::pair<std::size_t, std::size_t>> stack;  // (vertex, out index)
  for (std::size_t start = 0; start < g.vertices.size(); ++start) {
    if (state[start] != 0) continue;
    stack.push_back({start, 0});
    state[start] = 1;
    while (!stack.empty()) {
      auto& [v, i] = stack.back();
      if (i < out[v].size()) {
        const auto [w, e] = out[v][i++];
        if (state[w] == 1) {
          // Found a cycle: collect labels from w up the stack.
          res.verdict = TerminationResult::Verdict::may_not_terminate;
          bool in_cycle = false;
          for (const auto& [sv, si] : stack) {
            if (sv == w) in_cycle = true;
            if (in_cycle && si > 0) res.witness_cycle.push_back(g.edges[out[sv][si - 1].second].label);
          }
          res.witness_cycle.push_back(g.edges[e].label);
          return res;
        }
        if (state[w] == 0) {
          state[w] = 1;
          stack.push_back({w, 0});
        }
      } else {
        state[v] = 2;
        stack.pop_back();
      }
    }
  }
  res.verdict = TerminationResult::Verdict::terminates;
  return res;
}

inline RangeResult check_range(const PetriNet& net, const ResourceAddress& place,
                               const ExploreLimits& limits) {
  if (!net.places.count(place)) throw NotFound("no place '" + place.str() + "'");
  const StateGraph g = explore_states(net, limits);
  RangeResult res;
  res.unknown_beyond_limit = !g.complete;
  for (const auto& m : g.vertices) {
    auto it = m.values.find(place);
    if (it == m.values.end()) continue;
    if (!res.min || it->second < *res.min) res.min = it->second;
    if (!res.max || *res.max < it->second) res.max = it->second;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// PNML-like XML subset: places with initial markings, transitions, and arcs
/// derived from each rule's reads (PRE + payload references) and writes.
inline std::string to_pnml(const PetriNet& net) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<pnml>\n  <net id=\"sc\">\n";
  for (const auto& [addr, place] : net.places) {
    out += "    <place id=\"" + detail::xml_escape(addr.str()) + "\">";
    if (place.initial)
      out += "<initialMarking>" + detail::xml_escape(place.initial->str()) + "</initialMarking>";
    out += "</place>\n";
  }
  for (const auto& [addr, tr] : net.transitions) {
    out += "    <place id=\"" + detail::xml_escape(addr.str()) +
           "\" agent=\"true\"><initialMarking>live</initialMarking></place>\n";
    out += "    <transition id=\"t:" + detail::xml_escape(addr.str()) + "\"><guard>" +
           detail::xml_escape(render_expr(tr.rule.pre)) + "</guard></transition>\n";
  }
  std::size_t arc = 0;
  const auto emit_arc = [&](const std::string& from, const std::string& to,
                            const std::string& kind) {
    out += "    <arc id=\"a" + std::to_string(arc++) + "\" source=\"" +
           detail::xml_escape(from) + "\" target=\"" + detail::xml_escape(to) + "\" kind=\"" +
           kind + "\"/>\n";
  };
  for (const auto& [addr, tr] : net.transitions) {
    const std::string tid = "t:" + addr.str();
    emit_arc(addr.str(), tid, "agent");  // paired agent-place enables its transition
    std::vector<RefAddr> reads;
    collect_refs(tr.rule.pre, reads);
    for (const auto& action : tr.rule.actions)
      if (action.payload) collect_refs(action.payload, reads);
    std::set<std::string> seen;
    for (const auto& r : reads) {
      const std::string id = r.resolve(tr.rule.host_cell).str();
      if (seen.insert(id).second) emit_arc(id, tid, "read");
    }
    for (const auto& action : tr.rule.actions)
      emit_arc(tid, action.target.resolve(tr.rule.host_cell).str(),
               action.op == Op::remove ? "delete" : "write");
  }
  out += "  </net>\n</pnml>\n";
  return out;
}

inline std::string stategraph_to_dot(const StateGraph& g) {
  std::string out = "digraph stategraph {\n  node [shape=box, fontsize=9];\n";
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    std::string label;
    for (const auto& [a, v] : g.vertices[i].values) {
      if (!label.empty()) label += "\\n";
      label += a.str() + "=" + v.str();
    }
    out += "  s" + std::to_string(i) + " [label=\"" + label + "\"];\n";
  }
  for (const auto& e : g.edges) {
    out += "  s" + std::to_string(e.from) + " -> s" + std::to_string(e.to) + " [label=\"" +
           e.label + "\"" + (e.firing ? "" : ", style=dashed") + "];\n";
  }
  out += "}\n";
  return out;
}

}  // namespace orgami::petri
