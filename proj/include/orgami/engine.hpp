#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "orgami/crm.hpp"
#include "orgami/netsim.hpp"
#include "orgami/rules.hpp"

namespace orgami {

// ---------------------------------------------------------------------------
// Choreography: a declarative set of cells with their initial resources and
// rules, shared by the scenario loader, the Petri translator and deployment.
// ---------------------------------------------------------------------------

struct ResourceSpec {
  Kind kind = Kind::L;
  std::string name;
  Value value;            // for /A/: rule source as a text value
  std::string direction;  // /S/ only: "in" (sensor) or "out" (actuator)

  ResourceAddress address(const std::string& cell) const { return {cell, kind, name}; }
};

struct CellSpec {
  std::string id;
  std::vector<ResourceSpec> resources;
};

struct Choreography {
  std::vector<CellSpec> cells;

  CellSpec& cell(const std::string& id) {
    for (auto& c : cells)
      if (c.id == id) return c;
    cells.push_back(CellSpec{id, {}});
    return cells.back();
  }

  std::size_t rule_count() const {
    std::size_t n = 0;
    for (const auto& c : cells)
      for (const auto& r : c.resources)
        if (r.kind == Kind::A) ++n;
    return n;
  }
};

// ---------------------------------------------------------------------------
// Flows
// ---------------------------------------------------------------------------

struct Interaction {
  Op op = Op::update;
  ResourceAddress target;
  std::optional<Value> value;
};

struct FlowStep {
  std::string rule;
  SimTime fired_at = 0;
  std::vector<Interaction> emitted;
  std::vector<std::string> errors;
  bool suppressed = false;  // ttl exhausted: interactions recorded but not applied
};

struct FlowTrace {
  std::uint64_t id = 0;
  MutationEvent trigger;
  std::vector<FlowStep> steps;
  std::vector<std::string> apply_errors;  // delivery-time failures (conflicts, drops)
  bool terminated = false;
  bool ttl_exhausted = false;
  bool done = false;
};

// ---------------------------------------------------------------------------
// System: cells + rule registry + network simulator, driven by one
// single-threaded scheduler. One tick = apply every event due at that time,
// then run one agent-evaluation round over the mutations; interactions
// computed in the round are applied at tick+1 (plus network transit for
// remote targets). Rules are evaluated against round-start snapshots and
// their interactions applied in ascending rule-id order.
// ---------------------------------------------------------------------------

class System {
public:
  System() : sim_(Topology{}, LinkModel::fixed(0), 0) {}
  System(Topology topology, LinkModel link, std::uint64_t seed)
      : sim_(std::move(topology), link, seed) {}

  int default_ttl = 64;

  Simulator& sim() { return sim_; }
  const Simulator& sim() const { return sim_; }
  std::map<std::string, Cell>& cells() { return cells_; }
  const std::map<std::string, Cell>& cells() const { return cells_; }
  const std::vector<MutationEvent>& event_log() const { return event_log_; }
  const std::vector<std::string>& supervisor_errors() const { return supervisor_errors_; }

  Cell& add_cell(const std::string& id) {
    auto [it, fresh] = cells_.emplace(id, Cell(id));
    if (!fresh) throw AddressConflict("cell '" + id + "' already exists");
    return it->second;
  }

  Cell& cell(const std::string& id) {
    auto it = cells_.find(id);
    if (it == cells_.end()) throw NotFound("no cell '" + id + "'");
    return it->second;
  }
  const Cell& cell(const std::string& id) const {
    auto it = cells_.find(id);
    if (it == cells_.end()) throw NotFound("no cell '" + id + "'");
    return it->second;
  }

  /// Installs an initial resource. Load-time state is not an event: nothing
  /// is logged and no rule is woken.
  void install_resource(const ResourceAddress& addr, const Value& value,
                        const std::string& direction = "") {
    Cell& c = cell(addr.cell);
    if (addr.kind == Kind::S && direction == "in") c.mark_sensor_input(addr);
    c.apply(Op::create, addr, value, WriteOrigin::supervisor, 0);
    if (addr.kind == Kind::A) register_rule(addr, value.as_text());
  }

  void load(const Choreography& choreo) {
    for (const auto& cs : choreo.cells) {
      if (!cells_.count(cs.id)) add_cell(cs.id);
      for (const auto& rs : cs.resources) install_resource(rs.address(cs.id), rs.value, rs.direction);
    }
  }

  const std::map<ResourceAddress, AgentRule>& rules() const { return rules_; }

  // --- scheduling ----------------------------------------------------------

  /// Driver injection: create-or-update `addr` at time `at`. Starts a new
  /// metabolic flow whose trigger is the injection's mutation event.
  std::uint64_t inject(const ResourceAddress& addr, const Value& value, SimTime at,
                       std::optional<int> ttl = std::nullopt) {
    const std::uint64_t flow = next_flow_++;
    auto& st = flows_[flow];
    st.trace.id = flow;
    st.ttl = ttl.value_or(default_ttl);
    st.pending = 1;
    const std::uint64_t ref = next_control_++;
    controls_[ref] = Control{Control::Kind::inject, addr, value, {}, flow};
    sim_.schedule(at, addr.cell, SimEvent::Kind::control, ref);
    return flow;
  }

  /// Supervisor-originated interaction (used by direct deployment): applied
  /// locally when src is the target cell, otherwise routed over the network.
  void supervisor_interaction(const std::string& src_cell, const Interaction& interaction,
                              SimTime at) {
    schedule_interaction(interaction, src_cell, "", at, /*flow=*/0, /*depth=*/0,
                         WriteOrigin::supervisor, nullptr);
  }

  void schedule_topology_switch(const Topology& next, SimTime at) {
    const std::uint64_t ref = next_control_++;
    controls_[ref] = Control{Control::Kind::switch_topo, {}, Value(), next, 0};
    sim_.schedule(at, "", SimEvent::Kind::control, ref);
  }

  // --- execution -----------------------------------------------------------

  /// Processes one tick: every event due at the next queue time, then one
  /// agent-evaluation round. Returns false when the queue is empty.
  bool advance_tick() {
    if (sim_.idle()) return false;
    const SimTime t = sim_.next_time();
    while (!sim_.idle() && sim_.next_time() == t) {
      auto ev = sim_.step();
      if (!ev) break;
      dispatch(*ev);
    }
    evaluation_round(t);
    finalize_flows();
    return true;
  }

  void run(std::size_t max_ticks = 1'000'000) {
    for (std::size_t i = 0; i < max_ticks && advance_tick(); ++i) {
    }
  }

  void run_until(SimTime t_end) {
    while (!sim_.idle() && sim_.next_time() <= t_end) advance_tick();
  }

  /// run_flow: inject one trigger into an otherwise idle system and run the
  /// resulting metabolic flow to completion (or ttl exhaustion).
  const FlowTrace& run_flow(const ResourceAddress& addr, const Value& value, int ttl) {
    if (ttl < 1) throw InvalidParams("ttl must be >= 1");
    const std::uint64_t flow = inject(addr, value, sim_.now() + 1, ttl);
    while (!flows_.at(flow).trace.done && advance_tick()) {
    }
    return flows_.at(flow).trace;
  }

  const FlowTrace& flow_trace(std::uint64_t id) const { return flows_.at(id).trace; }
  std::vector<const FlowTrace*> flow_traces() const {
    std::vector<const FlowTrace*> out;
    for (const auto& [id, st] : flows_) out.push_back(&st.trace);
    return out;
  }

  // --- direct rule evaluation (bypasses the scheduler; used by tests and
  // --- the Petri translation contract) --------------------------------------

  static bool evaluate_pre(const AgentRule& rule, const Snapshot& xn,
                           const std::map<ResourceAddress, std::optional<Value>>* prev = nullptr) {
    EvalContext ctx;
    ctx.host = &xn;
    ctx.host_cell = xn.cell;
    ctx.prev = prev;
    const Value v = eval(rule.pre, ctx);
    if (!v.is_bool()) throw TypeError("PRE of rule '" + rule.id + "' is not boolean");
    return v.as_bool();
  }

  /// fire_agent: evaluates every action against the given snapshots. Action
  /// evaluation errors are reported through `errors` and skip only the
  /// failing action.
  static std::vector<Interaction> fire_agent(
      const AgentRule& rule, const Snapshot& xn,
      const std::map<std::string, const Snapshot*>& targets,
      const std::map<ResourceAddress, std::optional<Value>>* prev,
      std::vector<std::string>& errors) {
    std::vector<Interaction> out;
    for (const auto& action : rule.actions) {
      const std::string target_cell =
          action.target.host_relative() ? rule.host_cell : action.target.cell;
      Interaction it;
      it.op = action.op;
      it.target = action.target.resolve(rule.host_cell);
      if (action.op != Op::remove) {
        EvalContext ctx;
        ctx.host = &xn;
        ctx.host_cell = rule.host_cell;
        ctx.target_cell = target_cell;
        if (target_cell != rule.host_cell) {
          auto f = targets.find(target_cell);
          ctx.target = f == targets.end() ? nullptr : f->second;
        }
        ctx.prev = prev;
        try {
          it.value = eval(action.payload, ctx);
        } catch (const Error& e) {
          errors.push_back("action on '" + it.target.str() + "': " + e.what());
          continue;
        }
      }
      out.push_back(std::move(it));
    }
    return out;
  }

private:
  struct Control {
    enum class Kind { inject, switch_topo };
    Kind kind = Kind::inject;
    ResourceAddress addr;
    Value value;
    Topology topology;
    std::uint64_t flow = 0;
  };

  struct PendingInteraction {
    Interaction interaction;
    std::string by_rule;
    std::string src_cell;
    std::uint64_t flow = 0;
    int depth = 0;
    WriteOrigin origin = WriteOrigin::agent;
    std::shared_ptr<const Snapshot> sender_snapshot;
  };

  struct FlowState {
    FlowTrace trace;
    int pending = 0;
    int ttl = 64;
  };

  void register_rule(const ResourceAddress& addr, const std::string& source) {
    AgentRule rule = parse_rule(source);
    rule.id = addr.str();
    rule.host_cell = addr.cell;
    rules_[addr] = std::move(rule);
  }

  FlowState& flow_state(std::uint64_t id) { return flows_[id]; }

  void note_apply_error(std::uint64_t flow, const std::string& msg) {
    if (flow == 0) {
      supervisor_errors_.push_back(msg);
      return;
    }
    flows_[flow].trace.apply_errors.push_back(msg);
  }

  void dispatch(const SimEvent& ev) {
    switch (ev.kind) {
      case SimEvent::Kind::control: {
        auto node = controls_.extract(ev.ref);
        if (node.empty()) return;
        Control& c = node.mapped();
        if (c.kind == Control::Kind::switch_topo) {
          for (std::uint64_t ref : sim_.switch_topology(c.topology, ev.time)) drop_pending(ref);
          return;
        }
        apply_injection(c, ev.time);
        return;
      }
      case SimEvent::Kind::local:
      case SimEvent::Kind::message: {
        auto node = pending_.extract(ev.ref);
        if (node.empty()) return;
        apply_interaction_event(node.mapped(), ev.time);
        return;
      }
    }
  }

  void drop_pending(std::uint64_t ref) {
    auto node = pending_.extract(ref);
    if (node.empty()) return;
    PendingInteraction& p = node.mapped();
    if (p.flow) {
      auto& st = flows_[p.flow];
      st.pending -= 1;
      st.trace.apply_errors.push_back("message to '" + p.interaction.target.str() +
                                      "' dropped by topology switch");
    } else {
      supervisor_errors_.push_back("supervisor message to '" + p.interaction.target.str() +
                                   "' dropped by topology switch");
    }
  }

  void apply_injection(const Control& c, SimTime t) {
    auto& st = flows_[c.flow];
    st.pending -= 1;
    Cell* target = nullptr;
    try {
      target = &cell(c.addr.cell);
      const Op op = target->has(c.addr) ? Op::update : Op::create;
      MutationEvent ev = target->apply(op, c.addr, c.value, WriteOrigin::driver, t);
      ev.flow = c.flow;
      ev.depth = 0;
      st.trace.trigger = ev;
      record_mutation(std::move(ev));
    } catch (const Error& e) {
      st.trace.apply_errors.push_back(std::string("injection failed: ") + e.what());
    }
  }

  void apply_interaction_event(PendingInteraction& p, SimTime t) {
    if (p.flow) flows_[p.flow].pending -= 1;
    // A message from cell m refreshes the receiver's cached snapshot of X_m.
    if (p.sender_snapshot && p.src_cell != p.interaction.target.cell)
      xm_cache_[p.interaction.target.cell][p.src_cell] = p.sender_snapshot;
    try {
      Cell& target = cell(p.interaction.target.cell);
      MutationEvent ev =
          target.apply(p.interaction.op, p.interaction.target, p.interaction.value, p.origin, t);
      ev.flow = p.flow;
      ev.depth = p.depth;
      if (p.interaction.target.kind == Kind::A) {
        if (p.interaction.op == Op::remove)
          rules_.erase(p.interaction.target);
        else
          register_rule(p.interaction.target, p.interaction.value->as_text());
      }
      record_mutation(std::move(ev));
    } catch (const Error& e) {
      note_apply_error(p.flow, "apply " + op_name(p.interaction.op) + " '" +
                                   p.interaction.target.str() + "' by " + p.by_rule + ": " +
                                   e.what());
    }
  }

  void record_mutation(MutationEvent ev) {
    batch_[ev.address.cell].push_back(ev);
    event_log_.push_back(std::move(ev));
  }

  void evaluation_round(SimTime t) {
    if (batch_.empty()) return;

    struct Candidate {
      ResourceAddress addr;
      std::uint64_t flow = 0;
      int depth = 0;
    };
    std::vector<Candidate> woken;
    for (const auto& [cell_id, events] : batch_) {
      std::set<ResourceAddress> mutated;
      for (const auto& ev : events) mutated.insert(ev.address);
      for (const auto& [raddr, rule] : rules_) {
        if (rule.host_cell != cell_id) continue;
        bool wake = mutated.count(raddr) != 0;  // own-address create/update wakes the rule
        if (!wake) {
          for (const auto& a : wake_set(rule))
            if (mutated.count(a)) {
              wake = true;
              break;
            }
        }
        if (!wake) continue;
        // Attribute the firing to the first event of the batch that woke it.
        Candidate cand{raddr, 0, 0};
        const auto ws = wake_set(rule);
        for (const auto& ev : events) {
          if (ev.address == raddr || ws.count(ev.address)) {
            cand.flow = ev.flow;
            cand.depth = ev.depth;
            break;
          }
        }
        woken.push_back(std::move(cand));
      }
    }
    std::sort(woken.begin(), woken.end(),
              [](const Candidate& a, const Candidate& b) { return a.addr < b.addr; });

    // Round-start snapshots (shared with remote messages emitted this round)
    // and pre-mutation values per cell.
    std::map<std::string, std::shared_ptr<const Snapshot>> snaps;
    const auto snap_of = [&](const std::string& id) -> std::shared_ptr<const Snapshot> {
      auto it = snaps.find(id);
      if (it == snaps.end())
        it = snaps.emplace(id, std::make_shared<Snapshot>(cell(id).snapshot())).first;
      return it->second;
    };
    std::map<std::string, std::map<ResourceAddress, std::optional<Value>>> prevs;
    for (const auto& [cell_id, events] : batch_) {
      auto& pm = prevs[cell_id];
      for (const auto& ev : events)
        if (!pm.count(ev.address)) pm[ev.address] = ev.old_value;
    }
    batch_.clear();

    for (const auto& cand : woken) {
      auto rit = rules_.find(cand.addr);
      if (rit == rules_.end()) continue;  // deleted earlier in the apply phase
      const AgentRule& rule = rit->second;
      const auto xn = snap_of(rule.host_cell);
      const auto& prev = prevs[rule.host_cell];
      FlowStep step;
      step.rule = rule.id;
      step.fired_at = t;
      bool fired = false;
      try {
        fired = evaluate_pre(rule, *xn, &prev);
      } catch (const Error& e) {
        step.errors.push_back(std::string("PRE: ") + e.what());
        flows_[cand.flow].trace.steps.push_back(std::move(step));
        continue;
      }
      if (!fired) continue;

      std::map<std::string, const Snapshot*> targets;
      for (const auto& action : rule.actions) {
        const std::string tc = action.target.host_relative() ? rule.host_cell : action.target.cell;
        if (tc == rule.host_cell || targets.count(tc)) continue;
        auto oit = xm_cache_.find(rule.host_cell);
        const Snapshot* cached = nullptr;
        if (oit != xm_cache_.end()) {
          auto cit = oit->second.find(tc);
          if (cit != oit->second.end()) cached = cit->second.get();
        }
        targets[tc] = cached;
      }
      step.emitted = fire_agent(rule, *xn, targets, &prev, step.errors);

      auto& st = flows_[cand.flow];
      const int depth = cand.depth + 1;
      if (cand.flow != 0 && depth > st.ttl) {
        step.suppressed = true;
        st.trace.ttl_exhausted = true;
      } else {
        for (const auto& interaction : step.emitted)
          schedule_interaction(interaction, rule.host_cell, rule.id, t + 1, cand.flow, depth,
                               WriteOrigin::agent, snap_of(rule.host_cell));
      }
      st.trace.steps.push_back(std::move(step));
    }
  }

  void schedule_interaction(const Interaction& interaction, const std::string& src,
                            const std::string& by_rule, SimTime at, std::uint64_t flow, int depth,
                            WriteOrigin origin, std::shared_ptr<const Snapshot> sender_snapshot) {
    const std::uint64_t ref = next_pending_++;
    PendingInteraction p{interaction, by_rule, src, flow, depth, origin,
                         std::move(sender_snapshot)};
    if (interaction.target.cell == src) {
      pending_[ref] = std::move(p);
      if (flow) flows_[flow].pending += 1;
      sim_.schedule(at, src, SimEvent::Kind::local, ref);
      return;
    }
    try {
      pending_[ref] = std::move(p);
      const SendResult sr = sim_.send(src, interaction.target.cell, ref, at);
      if (!sr.delivered) {
        pending_.erase(ref);
        note_apply_error(flow, "message to '" + interaction.target.str() + "' lost in transit");
        return;
      }
      if (flow) flows_[flow].pending += 1;
    } catch (const Unreachable& e) {
      pending_.erase(ref);
      note_apply_error(flow, std::string("unreachable: ") + e.what());
    }
  }

  void finalize_flows() {
    for (auto& [id, st] : flows_) {
      if (id == 0 || st.trace.done) continue;
      if (st.pending == 0) {
        st.trace.done = true;
        st.trace.terminated = !st.trace.ttl_exhausted;
      }
    }
  }

  Simulator sim_;
  std::map<std::string, Cell> cells_;
  std::map<ResourceAddress, AgentRule> rules_;
  std::map<std::string, std::vector<MutationEvent>> batch_;
  std::map<std::string, std::map<std::string, std::shared_ptr<const Snapshot>>> xm_cache_;
  std::map<std::uint64_t, PendingInteraction> pending_;
  std::map<std::uint64_t, Control> controls_;
  std::map<std::uint64_t, FlowState> flows_;
  std::vector<MutationEvent> event_log_;
  std::vector<std::string> supervisor_errors_;
  std::uint64_t next_pending_ = 1;
  std::uint64_t next_control_ = 1;
  std::uint64_t next_flow_ = 1;
};

}  // namespace orgami
