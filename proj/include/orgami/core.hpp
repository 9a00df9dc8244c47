#pragma once

#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "orgami/errors.hpp"

namespace orgami {

using SimTime = std::int64_t;

// ---------------------------------------------------------------------------
// Resource kinds: /L/ local memory, /S/ system I/O, /A/ agent rule.
// ---------------------------------------------------------------------------

enum class Kind : char { L = 'L', S = 'S', A = 'A' };

inline char kind_char(Kind k) { return static_cast<char>(k); }

inline Kind parse_kind(char c) {
  switch (c) {
    case 'L': return Kind::L;
    case 'S': return Kind::S;
    case 'A': return Kind::A;
    default: throw InvalidParams(std::string("unknown resource kind '") + c + "'");
  }
}

inline bool is_valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
  return true;
}

inline bool is_valid_cell_id(std::string_view s) { return is_valid_name(s); }

// ---------------------------------------------------------------------------
// Value: tagged scalar stored in /L/ and /S/ resources. /A/ resources store
// rule source text as a text value.
// ---------------------------------------------------------------------------

inline std::string format_real(double v) {
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

class Value {
public:
  enum class Type { boolean, integer, real, text };

  Value() : v_(false) {}

  static Value boolean(bool b) { return Value(b); }
  static Value integer(std::int64_t i) { return Value(i); }
  static Value real(double d) {
    if (!std::isfinite(d)) throw EvalError("non-finite real value");
    return Value(d);
  }
  static Value text(std::string s) { return Value(std::move(s)); }

  Type type() const { return static_cast<Type>(v_.index()); }
  bool is_bool() const { return type() == Type::boolean; }
  bool is_int() const { return type() == Type::integer; }
  bool is_real() const { return type() == Type::real; }
  bool is_text() const { return type() == Type::text; }
  bool is_numeric() const { return is_int() || is_real(); }

  bool as_bool() const { return std::get<bool>(v_); }
  std::int64_t as_int() const { return std::get<std::int64_t>(v_); }
  double as_real() const { return std::get<double>(v_); }
  const std::string& as_text() const { return std::get<std::string>(v_); }
  double as_number() const { return is_int() ? static_cast<double>(as_int()) : as_real(); }

  bool operator==(const Value& o) const = default;
  auto operator<=>(const Value& o) const = default;

  std::string str() const {
    switch (type()) {
      case Type::boolean: return as_bool() ? "true" : "false";
      case Type::integer: return std::to_string(as_int());
      case Type::real: return format_real(as_real());
      case Type::text: return as_text();
    }
    return {};
  }

private:
  explicit Value(bool b) : v_(b) {}
  explicit Value(std::int64_t i) : v_(i) {}
  explicit Value(double d) : v_(d) {}
  explicit Value(std::string s) : v_(std::move(s)) {}

  std::variant<bool, std::int64_t, double, std::string> v_;
};

// ---------------------------------------------------------------------------
// Addressing: `cell/<kind>/<name>`, e.g. `n3/L/p0`.
// ---------------------------------------------------------------------------

struct ResourceAddress {
  std::string cell;
  Kind kind = Kind::L;
  std::string name;

  auto operator<=>(const ResourceAddress&) const = default;

  std::string str() const { return cell + "/" + kind_char(kind) + "/" + name; }

  static ResourceAddress parse(std::string_view s) {
    const auto a = s.find('/');
    const auto b = (a == std::string_view::npos) ? a : s.find('/', a + 1);
    if (a == std::string_view::npos || b == std::string_view::npos || b != a + 2)
      throw InvalidParams("bad resource address '" + std::string(s) + "'");
    ResourceAddress addr;
    addr.cell = std::string(s.substr(0, a));
    addr.kind = parse_kind(s[a + 1]);
    addr.name = std::string(s.substr(b + 1));
    if (!is_valid_cell_id(addr.cell) || !is_valid_name(addr.name))
      throw InvalidParams("bad resource address '" + std::string(s) + "'");
    return addr;
  }
};

struct Resource {
  ResourceAddress address;
  Value payload;
  std::uint64_t version = 0;

  bool operator==(const Resource&) const = default;
};

/// Immutable view of one cell's resource state (the X_n of the agent model).
/// Snapshots are plain values: copying a cell's map detaches it from all
/// later mutations, so they are safe to hand to any thread.
struct Snapshot {
  std::string cell;
  std::map<ResourceAddress, Resource> items;

  bool has(const ResourceAddress& a) const { return items.count(a) != 0; }
  const Value* find(const ResourceAddress& a) const {
    auto it = items.find(a);
    return it == items.end() ? nullptr : &it->second.payload;
  }
};

// ---------------------------------------------------------------------------
// Mutations
// ---------------------------------------------------------------------------

enum class Op { create, update, remove };

inline std::string op_name(Op op) {
  switch (op) {
    case Op::create: return "create";
    case Op::update: return "update";
    case Op::remove: return "delete";
  }
  return {};
}

struct MutationEvent {
  ResourceAddress address;
  Op op = Op::update;
  std::optional<Value> value;      // absent for delete
  std::optional<Value> old_value;  // pre-mutation payload; absent for create
  SimTime time = 0;
  std::uint64_t version = 0;  // version after the operation
  std::uint64_t flow = 0;     // flow id; 0 = outside any flow
  int depth = 0;              // diffusion depth within the flow

  bool operator==(const MutationEvent&) const = default;
};

}  // namespace orgami
