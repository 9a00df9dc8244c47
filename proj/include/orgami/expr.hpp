#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "orgami/core.hpp"

namespace orgami {

// ---------------------------------------------------------------------------
// Expression AST for rule PRE/POST. References name resources as
// `[cell/]KIND/name`; an omitted cell or the keyword `self` means the rule's
// host cell. `prev(ref)` reads the pre-mutation value of an address touched
// by the triggering round; `exists(ref)` / `exists(prev(ref))` guard absence.
// ---------------------------------------------------------------------------

struct RefAddr {
  std::string cell;  // empty or "self" = host cell
  Kind kind = Kind::L;
  std::string name;

  auto operator<=>(const RefAddr&) const = default;

  bool host_relative() const { return cell.empty() || cell == "self"; }

  ResourceAddress resolve(const std::string& host) const {
    return ResourceAddress{host_relative() ? host : cell, kind, name};
  }

  std::string str() const {
    std::string s;
    if (!cell.empty()) {
      s += cell;
      s += '/';
    }
    s += kind_char(kind);
    s += '/';
    s += name;
    return s;
  }
};

enum class BinOp { add, sub, mul, div, eq, ne, lt, le, gt, ge, land, lor };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class NodeKind { literal, reference, prev, exists, exists_prev, negate, logical_not, binary };

  NodeKind node = NodeKind::literal;
  Value lit;
  RefAddr ref;
  BinOp op = BinOp::add;
  ExprPtr lhs, rhs;

  static ExprPtr literal(Value v) {
    auto e = std::make_shared<Expr>();
    e->node = NodeKind::literal;
    e->lit = std::move(v);
    return e;
  }
  static ExprPtr reference(RefAddr r) {
    auto e = std::make_shared<Expr>();
    e->node = NodeKind::reference;
    e->ref = std::move(r);
    return e;
  }
  static ExprPtr prev(RefAddr r) {
    auto e = std::make_shared<Expr>();
    e->node = NodeKind::prev;
    e->ref = std::move(r);
    return e;
  }
  static ExprPtr exists(RefAddr r, bool of_prev = false) {
    auto e = std::make_shared<Expr>();
    e->node = of_prev ? NodeKind::exists_prev : NodeKind::exists;
    e->ref = std::move(r);
    return e;
  }
  static ExprPtr negate(ExprPtr a) {
    // Fold numeric literals so `-5` and literal(-5) are the same tree.
    if (a->node == NodeKind::literal) {
      if (a->lit.is_int() && a->lit.as_int() != std::numeric_limits<std::int64_t>::min())
        return literal(Value::integer(-a->lit.as_int()));
      if (a->lit.is_real()) return literal(Value::real(-a->lit.as_real()));
    }
    auto e = std::make_shared<Expr>();
    e->node = NodeKind::negate;
    e->lhs = std::move(a);
    return e;
  }
  static ExprPtr logical_not(ExprPtr a) {
    auto e = std::make_shared<Expr>();
    e->node = NodeKind::logical_not;
    e->lhs = std::move(a);
    return e;
  }
  static ExprPtr binary(BinOp op, ExprPtr a, ExprPtr b) {
    auto e = std::make_shared<Expr>();
    e->node = NodeKind::binary;
    e->op = op;
    e->lhs = std::move(a);
    e->rhs = std::move(b);
    return e;
  }
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluation context: host snapshot X_n, optional target snapshot X_m (the
/// last-known cached view of the action's target cell), and the pre-mutation
/// values of the addresses touched by the triggering round.
struct EvalContext {
  const Snapshot* host = nullptr;
  std::string host_cell;
  const Snapshot* target = nullptr;
  std::string target_cell;
  const std::map<ResourceAddress, std::optional<Value>>* prev = nullptr;
};

namespace detail {

inline const Snapshot* snapshot_for(const RefAddr& r, const EvalContext& ctx, ResourceAddress& out) {
  if (r.host_relative() || r.cell == ctx.host_cell) {
    out = r.resolve(ctx.host_cell);
    return ctx.host;
  }
  if (!ctx.target_cell.empty() && r.cell == ctx.target_cell) {
    out = r.resolve(ctx.target_cell);
    if (!ctx.target)
      throw EvalError("no cached snapshot of cell '" + ctx.target_cell + "' available");
    return ctx.target;
  }
  throw EvalError("reference '" + r.str() + "' is neither host- nor target-cell local");
}

/// Current value of a reference, or nullptr when the address is absent.
inline const Value* lookup(const RefAddr& r, const EvalContext& ctx) {
  ResourceAddress addr;
  const Snapshot* snap = snapshot_for(r, ctx, addr);
  if (!snap) throw EvalError("no snapshot available for '" + r.str() + "'");
  return snap->find(addr);
}

/// Pre-mutation value: the prev map has an entry for every address mutated by
/// the triggering round (nullopt when the address did not exist before);
/// untouched addresses fall back to their current value.
inline const Value* lookup_prev(const RefAddr& r, const EvalContext& ctx, bool& known_absent) {
  known_absent = false;
  ResourceAddress addr = r.resolve(r.host_relative() ? ctx.host_cell : r.cell);
  if (ctx.prev) {
    auto it = ctx.prev->find(addr);
    if (it != ctx.prev->end()) {
      if (!it->second.has_value()) {
        known_absent = true;
        return nullptr;
      }
      return &*it->second;
    }
  }
  return lookup(r, ctx);
}

inline bool numeric_pair(const Value& a, const Value& b) { return a.is_numeric() && b.is_numeric(); }

inline Value arith(BinOp op, const Value& a, const Value& b) {
  if (!numeric_pair(a, b)) throw EvalError("arithmetic on non-numeric values");
  if (a.is_int() && b.is_int()) {
    const std::int64_t x = a.as_int(), y = b.as_int();
    std::int64_t r = 0;
    switch (op) {
      case BinOp::add:
        if (__builtin_add_overflow(x, y, &r)) throw EvalError("integer overflow");
        return Value::integer(r);
      case BinOp::sub:
        if (__builtin_sub_overflow(x, y, &r)) throw EvalError("integer overflow");
        return Value::integer(r);
      case BinOp::mul:
        if (__builtin_mul_overflow(x, y, &r)) throw EvalError("integer overflow");
        return Value::integer(r);
      case BinOp::div:
        if (y == 0) throw EvalError("division by zero");
        return Value::integer(x / y);
      default: break;
    }
  }
  const double x = a.as_number(), y = b.as_number();
  switch (op) {
    case BinOp::add: return Value::real(x + y);
    case BinOp::sub: return Value::real(x - y);
    case BinOp::mul: return Value::real(x * y);
    case BinOp::div:
      if (y == 0.0) throw EvalError("division by zero");
      return Value::real(x / y);
    default: break;
  }
  throw EvalError("bad arithmetic operator");
}

inline Value compare(BinOp op, const Value& a, const Value& b) {
  if (op == BinOp::eq || op == BinOp::ne) {
    bool eq;
    if (numeric_pair(a, b))
      eq = a.as_number() == b.as_number();
    else if (a.type() == b.type())
      eq = a == b;
    else
      throw EvalError("comparison between incompatible types");
    return Value::boolean(op == BinOp::eq ? eq : !eq);
  }
  int cmp;
  if (numeric_pair(a, b)) {
    const double x = a.as_number(), y = b.as_number();
    cmp = x < y ? -1 : (x > y ? 1 : 0);
  } else if (a.is_text() && b.is_text()) {
    cmp = a.as_text().compare(b.as_text());
    cmp = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
  } else {
    throw EvalError("ordering comparison on non-orderable values");
  }
  switch (op) {
    case BinOp::lt: return Value::boolean(cmp < 0);
    case BinOp::le: return Value::boolean(cmp <= 0);
    case BinOp::gt: return Value::boolean(cmp > 0);
    case BinOp::ge: return Value::boolean(cmp >= 0);
    default: throw EvalError("bad comparison operator");
  }
}

}  // namespace detail

inline Value eval(const ExprPtr& e, const EvalContext& ctx) {
  using NK = Expr::NodeKind;
  switch (e->node) {
    case NK::literal: return e->lit;
    case NK::reference: {
      const Value* v = detail::lookup(e->ref, ctx);
      if (!v) throw UnresolvedReference("unresolved reference '" + e->ref.str() + "'");
      return *v;
    }
    case NK::prev: {
      bool known_absent = false;
      const Value* v = detail::lookup_prev(e->ref, ctx, known_absent);
      if (!v) throw UnresolvedReference("unresolved reference 'prev(" + e->ref.str() + ")'");
      return *v;
    }
    case NK::exists: return Value::boolean(detail::lookup(e->ref, ctx) != nullptr);
    case NK::exists_prev: {
      bool known_absent = false;
      const Value* v = detail::lookup_prev(e->ref, ctx, known_absent);
      return Value::boolean(v != nullptr);
    }
    case NK::negate: {
      Value a = eval(e->lhs, ctx);
      if (a.is_int()) return Value::integer(-a.as_int());
      if (a.is_real()) return Value::real(-a.as_real());
      throw EvalError("unary minus on non-numeric value");
    }
    case NK::logical_not: {
      Value a = eval(e->lhs, ctx);
      if (!a.is_bool()) throw TypeError("NOT applied to non-boolean value");
      return Value::boolean(!a.as_bool());
    }
    case NK::binary: {
      if (e->op == BinOp::land || e->op == BinOp::lor) {
        // Short-circuit: this is what lets `exists(x) AND x > 3` guard absence.
        Value a = eval(e->lhs, ctx);
        if (!a.is_bool()) throw TypeError("boolean operator applied to non-boolean value");
        if (e->op == BinOp::land && !a.as_bool()) return Value::boolean(false);
        if (e->op == BinOp::lor && a.as_bool()) return Value::boolean(true);
        Value b = eval(e->rhs, ctx);
        if (!b.is_bool()) throw TypeError("boolean operator applied to non-boolean value");
        return b;
      }
      Value a = eval(e->lhs, ctx);
      Value b = eval(e->rhs, ctx);
      switch (e->op) {
        case BinOp::add:
        case BinOp::sub:
        case BinOp::mul:
        case BinOp::div: return detail::arith(e->op, a, b);
        default: return detail::compare(e->op, a, b);
      }
    }
  }
  throw EvalError("corrupt expression node");
}

// ---------------------------------------------------------------------------
// Static analysis helpers
// ---------------------------------------------------------------------------

inline void collect_refs(const ExprPtr& e, std::vector<RefAddr>& out) {
  using NK = Expr::NodeKind;
  switch (e->node) {
    case NK::reference:
    case NK::prev:
    case NK::exists:
    case NK::exists_prev: out.push_back(e->ref); return;
    case NK::negate:
    case NK::logical_not: collect_refs(e->lhs, out); return;
    case NK::binary:
      collect_refs(e->lhs, out);
      collect_refs(e->rhs, out);
      return;
    case NK::literal: return;
  }
}

inline bool uses_prev(const ExprPtr& e) {
  using NK = Expr::NodeKind;
  switch (e->node) {
    case NK::prev:
    case NK::exists_prev: return true;
    case NK::negate:
    case NK::logical_not: return uses_prev(e->lhs);
    case NK::binary: return uses_prev(e->lhs) || uses_prev(e->rhs);
    default: return false;
  }
}

enum class StaticType { boolean, numeric, text, unknown };

/// Bottom-up type inference. Reference types are unknown until runtime, but
/// impossible combinations (arithmetic on a literal boolean, `IF 1+2 THEN`)
/// are rejected here.
inline StaticType infer_type(const ExprPtr& e) {
  using NK = Expr::NodeKind;
  const auto want_numeric = [](StaticType t, const char* what) {
    if (t == StaticType::boolean || t == StaticType::text)
      throw TypeError(std::string(what) + " requires numeric operands");
  };
  const auto want_boolean = [](StaticType t, const char* what) {
    if (t == StaticType::numeric || t == StaticType::text)
      throw TypeError(std::string(what) + " requires boolean operands");
  };
  switch (e->node) {
    case NK::literal:
      switch (e->lit.type()) {
        case Value::Type::boolean: return StaticType::boolean;
        case Value::Type::text: return StaticType::text;
        default: return StaticType::numeric;
      }
    case NK::reference:
    case NK::prev: return StaticType::unknown;
    case NK::exists:
    case NK::exists_prev: return StaticType::boolean;
    case NK::negate: want_numeric(infer_type(e->lhs), "unary minus"); return StaticType::numeric;
    case NK::logical_not: want_boolean(infer_type(e->lhs), "NOT"); return StaticType::boolean;
    case NK::binary: {
      const StaticType a = infer_type(e->lhs);
      const StaticType b = infer_type(e->rhs);
      switch (e->op) {
        case BinOp::add:
        case BinOp::sub:
        case BinOp::mul:
        case BinOp::div:
          want_numeric(a, "arithmetic");
          want_numeric(b, "arithmetic");
          return StaticType::numeric;
        case BinOp::land:
        case BinOp::lor:
          want_boolean(a, "AND/OR");
          want_boolean(b, "AND/OR");
          return StaticType::boolean;
        default: return StaticType::boolean;  // comparisons
      }
    }
  }
  return StaticType::unknown;
}

inline bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->node != b->node) return false;
  using NK = Expr::NodeKind;
  switch (a->node) {
    case NK::literal: return a->lit == b->lit;
    case NK::reference:
    case NK::prev:
    case NK::exists:
    case NK::exists_prev: return a->ref == b->ref;
    case NK::negate:
    case NK::logical_not: return expr_equal(a->lhs, b->lhs);
    case NK::binary:
      return a->op == b->op && expr_equal(a->lhs, b->lhs) && expr_equal(a->rhs, b->rhs);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Rendering (the inverse of the parser; see rules.hpp)
// ---------------------------------------------------------------------------

inline std::string escape_text(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

inline std::string render_value(const Value& v) {
  return v.is_text() ? escape_text(v.as_text()) : v.str();
}

namespace detail {

inline int precedence(const ExprPtr& e) {
  using NK = Expr::NodeKind;
  if (e->node != NK::binary) return e->node == NK::negate || e->node == NK::logical_not ? 7 : 8;
  switch (e->op) {
    case BinOp::lor: return 1;
    case BinOp::land: return 2;
    case BinOp::eq:
    case BinOp::ne:
    case BinOp::lt:
    case BinOp::le:
    case BinOp::gt:
    case BinOp::ge: return 4;
    case BinOp::add:
    case BinOp::sub: return 5;
    default: return 6;
  }
}

inline const char* binop_text(BinOp op) {
  switch (op) {
    case BinOp::add: return "+";
    case BinOp::sub: return "-";
    case BinOp::mul: return "*";
    case BinOp::div: return "/";
    case BinOp::eq: return "==";
    case BinOp::ne: return "!=";
    case BinOp::lt: return "<";
    case BinOp::le: return "<=";
    case BinOp::gt: return ">";
    case BinOp::ge: return ">=";
    case BinOp::land: return "AND";
    case BinOp::lor: return "OR";
  }
  return "?";
}

}  // namespace detail

inline std::string render_expr(const ExprPtr& e) {
  using NK = Expr::NodeKind;
  const auto child = [&](const ExprPtr& c, bool right_side) {
    std::string s = render_expr(c);
    const int pc = detail::precedence(c), pe = detail::precedence(e);
    if (pc < pe || (pc == pe && right_side && c->node == NK::binary)) s = "(" + s + ")";
    return s;
  };
  switch (e->node) {
    case NK::literal: return render_value(e->lit);
    case NK::reference: return e->ref.str();
    case NK::prev: return "prev(" + e->ref.str() + ")";
    case NK::exists: return "exists(" + e->ref.str() + ")";
    case NK::exists_prev: return "exists(prev(" + e->ref.str() + "))";
    case NK::negate: return "-" + child(e->lhs, false);
    case NK::logical_not: return "NOT " + child(e->lhs, false);
    case NK::binary:
      return child(e->lhs, false) + " " + detail::binop_text(e->op) + " " + child(e->rhs, true);
  }
  return {};
}

}  // namespace orgami
