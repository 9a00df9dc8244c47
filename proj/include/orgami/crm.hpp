#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "orgami/core.hpp"
#include "orgami/rules.hpp"

namespace orgami {

/// Who is performing a write. Agents may not write to sensor-bound /S/
/// resources; drivers and the supervisor may write anywhere.
enum class WriteOrigin { supervisor, driver, agent };

// ---------------------------------------------------------------------------
// Cell: one node of the middleware, hosting addressable resources. All
// mutations go through apply() which emits exactly one MutationEvent.
// ---------------------------------------------------------------------------

class Cell {
public:
  Cell() = default;
  explicit Cell(std::string id) : id_(std::move(id)) {
    if (!is_valid_cell_id(id_)) throw InvalidParams("bad cell id '" + id_ + "'");
  }

  const std::string& id() const { return id_; }
  const std::map<ResourceAddress, Resource>& resources() const { return resources_; }
  bool empty() const { return resources_.empty(); }

  bool has(const ResourceAddress& addr) const { return resources_.count(addr) != 0; }

  const Resource& resource(const ResourceAddress& addr) const {
    auto it = resources_.find(addr);
    if (it == resources_.end()) throw NotFound("no resource at '" + addr.str() + "'");
    return it->second;
  }

  /// read_resource: current payload, no side effects.
  const Value& read(const ResourceAddress& addr) const { return resource(addr).payload; }

  /// Immutable copy of the cell state; later mutations do not affect it.
  Snapshot snapshot() const { return Snapshot{id_, resources_}; }

  /// Declares an /S/ address as sensor-bound (driver-writable only).
  void mark_sensor_input(const ResourceAddress& addr) {
    if (addr.kind != Kind::S) throw InvalidParams("sensor binding must name an /S/ resource");
    sensor_inputs_.insert(addr);
  }
  bool is_sensor_input(const ResourceAddress& addr) const { return sensor_inputs_.count(addr) != 0; }

  /// apply_interaction: create/update/delete one resource. Emits the single
  /// MutationEvent describing the change; version is bumped on create/update.
  MutationEvent apply(Op op, const ResourceAddress& addr, std::optional<Value> value,
                      WriteOrigin origin = WriteOrigin::supervisor, SimTime time = 0) {
    if (addr.cell != id_)
      throw InvalidParams("address '" + addr.str() + "' does not belong to cell '" + id_ + "'");
    if (!is_valid_name(addr.name)) throw InvalidParams("bad resource name '" + addr.name + "'");
    if (op == Op::remove && value.has_value())
      throw InvalidParams("delete carries no value");
    if (op != Op::remove && !value.has_value())
      throw InvalidParams(op_name(op) + " requires a value");
    if (origin == WriteOrigin::agent && is_sensor_input(addr))
      throw SensorWriteRejected("'" + addr.str() + "' is a sensor input; agents may not write it");
    if (op != Op::remove && addr.kind == Kind::A) validate_rule_payload(addr, *value);

    MutationEvent ev;
    ev.address = addr;
    ev.op = op;
    ev.time = time;
    auto it = resources_.find(addr);
    switch (op) {
      case Op::create: {
        if (it != resources_.end())
          throw AddressConflict("resource '" + addr.str() + "' already exists");
        Resource r{addr, *value, 1};
        ev.value = *value;
        ev.version = r.version;
        resources_.emplace(addr, std::move(r));
        break;
      }
      case Op::update: {
        if (it == resources_.end()) throw NotFound("no resource at '" + addr.str() + "'");
        ev.old_value = it->second.payload;
        it->second.payload = *value;
        it->second.version += 1;
        ev.value = *value;
        ev.version = it->second.version;
        break;
      }
      case Op::remove: {
        if (it == resources_.end()) throw NotFound("no resource at '" + addr.str() + "'");
        ev.old_value = it->second.payload;
        ev.version = it->second.version;
        resources_.erase(it);
        break;
      }
    }
    return ev;
  }

private:
  static void validate_rule_payload(const ResourceAddress& addr, const Value& value) {
    if (!value.is_text())
      throw KindMismatch("payload of '" + addr.str() + "' must be rule source text");
    try {
      parse_rule(value.as_text());
    } catch (const Error& e) {
      throw KindMismatch("payload of '" + addr.str() + "' is not a valid rule: " + e.what());
    }
  }

  std::string id_;
  std::map<ResourceAddress, Resource> resources_;
  std::set<ResourceAddress> sensor_inputs_;
};

// ---------------------------------------------------------------------------
// Event log
// ---------------------------------------------------------------------------

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

inline std::string event_log_csv(const std::vector<MutationEvent>& events) {
  std::string out = "time,cell,kind,name,operation,value,version\n";
  for (const auto& ev : events) {
    out += std::to_string(ev.time);
    out += ',';
    out += csv_escape(ev.address.cell);
    out += ',';
    out += kind_char(ev.address.kind);
    out += ',';
    out += csv_escape(ev.address.name);
    out += ',';
    out += op_name(ev.op);
    out += ',';
    out += ev.value ? csv_escape(ev.value->str()) : std::string();
    out += ',';
    out += std::to_string(ev.version);
    out += '\n';
  }
  return out;
}

/// Replays an event log against a set of cells. Used to check that the log is
/// a complete account of every mutation.
inline std::map<std::string, Cell> replay_events(std::map<std::string, Cell> cells,
                                                 const std::vector<MutationEvent>& events) {
  for (const auto& ev : events) {
    auto it = cells.find(ev.address.cell);
    if (it == cells.end()) it = cells.emplace(ev.address.cell, Cell(ev.address.cell)).first;
    it->second.apply(ev.op, ev.address, ev.value, WriteOrigin::supervisor, ev.time);
  }
  return cells;
}

}  // namespace orgami
