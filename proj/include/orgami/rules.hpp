#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "orgami/expr.hpp"

namespace orgami {

// ---------------------------------------------------------------------------
// ECA agent rules:
//
//   [ON addr, addr ...] IF <pre> THEN <action> [; <action> ...]
//   action := CREATE target = expr | UPDATE target = expr | DELETE target
//
// The ON list adds explicit wake-up subscriptions on top of the implicit ones
// derived from the PRE's references. PRE and subscriptions may only name
// host-cell addresses; action targets and POST payloads may also name the
// action's target cell.
// ---------------------------------------------------------------------------

struct Action {
  Op op = Op::update;
  RefAddr target;
  ExprPtr payload;  // null for DELETE
};

struct AgentRule {
  std::string id;         // name of the /A/ resource; assigned on install
  std::string host_cell;  // assigned on install
  std::vector<RefAddr> subscriptions;
  ExprPtr pre;
  std::vector<Action> actions;
};

inline bool rule_equal(const AgentRule& a, const AgentRule& b) {
  if (a.subscriptions != b.subscriptions) return false;
  if (!expr_equal(a.pre, b.pre)) return false;
  if (a.actions.size() != b.actions.size()) return false;
  for (std::size_t i = 0; i < a.actions.size(); ++i) {
    if (a.actions[i].op != b.actions[i].op) return false;
    if (a.actions[i].target != b.actions[i].target) return false;
    const bool pa = static_cast<bool>(a.actions[i].payload);
    if (pa != static_cast<bool>(b.actions[i].payload)) return false;
    if (pa && !expr_equal(a.actions[i].payload, b.actions[i].payload)) return false;
  }
  return true;
}

/// Host-cell addresses whose mutation wakes the rule: everything the PRE
/// references plus the explicit ON list. (The engine additionally wakes a
/// rule when its own /A/ address is created at runtime.)
inline std::set<ResourceAddress> wake_set(const AgentRule& rule) {
  std::set<ResourceAddress> out;
  std::vector<RefAddr> refs;
  if (rule.pre) collect_refs(rule.pre, refs);
  for (const auto& r : refs)
    if (r.host_relative()) out.insert(r.resolve(rule.host_cell));
  for (const auto& r : rule.subscriptions) out.insert(r.resolve(rule.host_cell));
  return out;
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

namespace ruleparse {

enum class Tok {
  end, ident, kind, number_int, number_real, string,
  kw_if, kw_then, kw_on, kw_create, kw_update, kw_delete, kw_and, kw_or, kw_not,
  kw_true, kw_false, kw_prev, kw_exists, kw_self,
  slash, comma, semi, assign, lparen, rparen,
  plus, minus, star, eq, ne, lt, le, gt, ge,
};

struct Token {
  Tok tok = Tok::end;
  std::string text;
  std::int64_t int_val = 0;
  double real_val = 0;
  int line = 1, col = 1;
};

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_ws();
    Token t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= src_.size()) return t;
    const char c = src_[pos_];
    if (c == '"') return lex_string(t);
    if (c >= '0' && c <= '9') return lex_number(t);
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') return lex_word(t);
    return lex_symbol(t);
  }

private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void skip_ws() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
      advance();
  }

  Token lex_string(Token t) {
    advance();  // opening quote
    std::string out;
    while (true) {
      if (pos_ >= src_.size()) throw SyntaxError(t.line, t.col, "unterminated string literal");
      const char c = src_[pos_];
      if (c == '"') {
        advance();
        break;
      }
      if (c == '\\') {
        advance();
        if (pos_ >= src_.size()) throw SyntaxError(t.line, t.col, "unterminated escape");
        const char e = src_[pos_];
        switch (e) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          default: throw SyntaxError(line_, col_, std::string("bad escape '\\") + e + "'");
        }
        advance();
      } else {
        out += c;
        advance();
      }
    }
    t.tok = Tok::string;
    t.text = std::move(out);
    return t;
  }

  Token lex_number(Token t) {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') advance();
    bool real = false;
    if (pos_ + 1 < src_.size() && src_[pos_] == '.' && src_[pos_ + 1] >= '0' && src_[pos_ + 1] <= '9') {
      real = true;
      advance();
      while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') advance();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && src_[p] >= '0' && src_[p] <= '9') {
        real = true;
        while (pos_ < p) advance();
        while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') advance();
      }
    }
    t.text = std::string(src_.substr(start, pos_ - start));
    if (real) {
      t.tok = Tok::number_real;
      auto r = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.real_val);
      if (r.ec != std::errc{}) throw SyntaxError(t.line, t.col, "bad real literal");
    } else {
      t.tok = Tok::number_int;
      auto r = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.int_val);
      if (r.ec != std::errc{}) throw SyntaxError(t.line, t.col, "integer literal out of range");
    }
    return t;
  }

  Token lex_word(Token t) {
    const std::size_t start = pos_;
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_')
        advance();
      else
        break;
    }
    t.text = std::string(src_.substr(start, pos_ - start));
    if (t.text == "IF") t.tok = Tok::kw_if;
    else if (t.text == "THEN") t.tok = Tok::kw_then;
    else if (t.text == "ON") t.tok = Tok::kw_on;
    else if (t.text == "CREATE") t.tok = Tok::kw_create;
    else if (t.text == "UPDATE") t.tok = Tok::kw_update;
    else if (t.text == "DELETE") t.tok = Tok::kw_delete;
    else if (t.text == "AND") t.tok = Tok::kw_and;
    else if (t.text == "OR") t.tok = Tok::kw_or;
    else if (t.text == "NOT") t.tok = Tok::kw_not;
    else if (t.text == "true") t.tok = Tok::kw_true;
    else if (t.text == "false") t.tok = Tok::kw_false;
    else if (t.text == "prev") t.tok = Tok::kw_prev;
    else if (t.text == "exists") t.tok = Tok::kw_exists;
    else if (t.text == "self") t.tok = Tok::kw_self;
    else if (t.text == "L" || t.text == "S" || t.text == "A") t.tok = Tok::kind;
    else if (is_valid_name(t.text)) t.tok = Tok::ident;
    else throw SyntaxError(t.line, t.col, "bad identifier '" + t.text + "'");
    return t;
  }

  Token lex_symbol(Token t) {
    const char c = src_[pos_];
    const auto two = [&](char second) {
      return pos_ + 1 < src_.size() && src_[pos_ + 1] == second;
    };
    switch (c) {
      case '/': advance(); t.tok = Tok::slash; return t;
      case ',': advance(); t.tok = Tok::comma; return t;
      case ';': advance(); t.tok = Tok::semi; return t;
      case '(': advance(); t.tok = Tok::lparen; return t;
      case ')': advance(); t.tok = Tok::rparen; return t;
      case '+': advance(); t.tok = Tok::plus; return t;
      case '-': advance(); t.tok = Tok::minus; return t;
      case '*': advance(); t.tok = Tok::star; return t;
      case '=':
        advance();
        if (two('=') || (pos_ < src_.size() && src_[pos_] == '=')) { advance(); t.tok = Tok::eq; }
        else t.tok = Tok::assign;
        return t;
      case '!':
        if (two('=')) { advance(); advance(); t.tok = Tok::ne; return t; }
        break;
      case '<':
        advance();
        if (pos_ < src_.size() && src_[pos_] == '=') { advance(); t.tok = Tok::le; }
        else t.tok = Tok::lt;
        return t;
      case '>':
        advance();
        if (pos_ < src_.size() && src_[pos_] == '=') { advance(); t.tok = Tok::ge; }
        else t.tok = Tok::gt;
        return t;
      default: break;
    }
    throw SyntaxError(t.line, t.col, std::string("unexpected character '") + c + "'");
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

// ---------------------------------------------------------------------------
// Parser (recursive descent)
// ---------------------------------------------------------------------------

class Parser {
public:
  explicit Parser(std::string_view src) : lex_(src) { shift(); }

  AgentRule parse_rule() {
    AgentRule rule;
    if (cur_.tok == Tok::kw_on) {
      shift();
      rule.subscriptions.push_back(parse_ref(/*host_only=*/true));
      while (cur_.tok == Tok::comma) {
        shift();
        rule.subscriptions.push_back(parse_ref(true));
      }
    }
    expect(Tok::kw_if, "IF");
    rule.pre = parse_expr();
    expect(Tok::kw_then, "THEN");
    rule.actions.push_back(parse_action());
    while (cur_.tok == Tok::semi) {
      shift();
      rule.actions.push_back(parse_action());
    }
    if (cur_.tok != Tok::end) fail("trailing input after rule");
    // Static PRE check: a definitely non-boolean PRE is a type error.
    if (infer_type(rule.pre) == StaticType::numeric || infer_type(rule.pre) == StaticType::text)
      throw TypeError("PRE must evaluate to a boolean");
    check_pre_host_only(rule);
    return rule;
  }

private:
  void shift() { cur_ = lex_.next(); }
  void expect(Tok t, const char* what) {
    if (cur_.tok != t) fail(std::string("expected ") + what);
    shift();
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw SyntaxError(cur_.line, cur_.col, msg + (cur_.text.empty() ? "" : " near '" + cur_.text + "'"));
  }

  static void check_pre_host_only(const AgentRule& rule) {
    std::vector<RefAddr> refs;
    collect_refs(rule.pre, refs);
    for (const auto& r : refs)
      if (!r.host_relative())
        throw TypeError("PRE may only reference host-cell resources (got '" + r.str() + "')");
    for (const auto& r : rule.subscriptions)
      if (!r.host_relative())
        throw TypeError("ON may only name host-cell resources (got '" + r.str() + "')");
  }

  Action parse_action() {
    Action a;
    switch (cur_.tok) {
      case Tok::kw_create: a.op = Op::create; break;
      case Tok::kw_update: a.op = Op::update; break;
      case Tok::kw_delete: a.op = Op::remove; break;
      default: fail("expected CREATE, UPDATE or DELETE");
    }
    shift();
    a.target = parse_ref(false);
    if (a.op != Op::remove) {
      expect(Tok::assign, "'='");
      a.payload = parse_expr();
    }
    return a;
  }

  // ref := [ident|self '/'] kind '/' ident
  RefAddr parse_ref(bool host_only) {
    RefAddr r;
    if (cur_.tok == Tok::ident || cur_.tok == Tok::kw_self) {
      r.cell = cur_.tok == Tok::kw_self ? "self" : cur_.text;
      shift();
      expect(Tok::slash, "'/'");
    }
    if (cur_.tok != Tok::kind) fail("expected resource kind L, S or A");
    r.kind = parse_kind(cur_.text[0]);
    shift();
    expect(Tok::slash, "'/'");
    if (cur_.tok != Tok::ident && cur_.tok != Tok::kind) fail("expected resource name");
    // A kind letter in name position would be an uppercase identifier; reject.
    if (cur_.tok == Tok::kind) fail("expected resource name");
    r.name = cur_.text;
    shift();
    if (host_only && !r.host_relative()) fail("expected a host-cell address");
    return r;
  }

  ExprPtr parse_expr() { return parse_or(); }

  ExprPtr parse_or() {
    ExprPtr e = parse_and();
    while (cur_.tok == Tok::kw_or) {
      shift();
      e = Expr::binary(BinOp::lor, e, parse_and());
    }
    return e;
  }
  ExprPtr parse_and() {
    ExprPtr e = parse_not();
    while (cur_.tok == Tok::kw_and) {
      shift();
      e = Expr::binary(BinOp::land, e, parse_not());
    }
    return e;
  }
  ExprPtr parse_not() {
    if (cur_.tok == Tok::kw_not) {
      shift();
      return Expr::logical_not(parse_not());
    }
    return parse_cmp();
  }
  ExprPtr parse_cmp() {
    ExprPtr e = parse_add();
    BinOp op;
    switch (cur_.tok) {
      case Tok::eq: op = BinOp::eq; break;
      case Tok::ne: op = BinOp::ne; break;
      case Tok::lt: op = BinOp::lt; break;
      case Tok::le: op = BinOp::le; break;
      case Tok::gt: op = BinOp::gt; break;
      case Tok::ge: op = BinOp::ge; break;
      default: return e;
    }
    shift();
    return Expr::binary(op, e, parse_add());
  }
  ExprPtr parse_add() {
    ExprPtr e = parse_mul();
    while (cur_.tok == Tok::plus || cur_.tok == Tok::minus) {
      const BinOp op = cur_.tok == Tok::plus ? BinOp::add : BinOp::sub;
      shift();
      e = Expr::binary(op, e, parse_mul());
    }
    return e;
  }
  ExprPtr parse_mul() {
    ExprPtr e = parse_unary();
    while (cur_.tok == Tok::star || cur_.tok == Tok::slash) {
      const BinOp op = cur_.tok == Tok::star ? BinOp::mul : BinOp::div;
      shift();
      e = Expr::binary(op, e, parse_unary());
    }
    return e;
  }
  ExprPtr parse_unary() {
    if (cur_.tok == Tok::minus) {
      shift();
      return Expr::negate(parse_unary());
    }
    return parse_primary();
  }

  ExprPtr parse_primary() {
    switch (cur_.tok) {
      case Tok::number_int: {
        auto e = Expr::literal(Value::integer(cur_.int_val));
        shift();
        return e;
      }
      case Tok::number_real: {
        auto e = Expr::literal(Value::real(cur_.real_val));
        shift();
        return e;
      }
      case Tok::string: {
        auto e = Expr::literal(Value::text(cur_.text));
        shift();
        return e;
      }
      case Tok::kw_true: shift(); return Expr::literal(Value::boolean(true));
      case Tok::kw_false: shift(); return Expr::literal(Value::boolean(false));
      case Tok::lparen: {
        shift();
        ExprPtr e = parse_expr();
        expect(Tok::rparen, "')'");
        return e;
      }
      case Tok::kw_prev: {
        shift();
        expect(Tok::lparen, "'('");
        RefAddr r = parse_ref(false);
        expect(Tok::rparen, "')'");
        return Expr::prev(std::move(r));
      }
      case Tok::kw_exists: {
        shift();
        expect(Tok::lparen, "'('");
        bool of_prev = false;
        if (cur_.tok == Tok::kw_prev) {
          of_prev = true;
          shift();
          expect(Tok::lparen, "'('");
        }
        RefAddr r = parse_ref(false);
        expect(Tok::rparen, "')'");
        if (of_prev) expect(Tok::rparen, "')'");
        return Expr::exists(std::move(r), of_prev);
      }
      case Tok::ident:
      case Tok::kw_self:
      case Tok::kind: return Expr::reference(parse_ref(false));
      default: fail("expected expression");
    }
  }

  Lexer lex_;
  Token cur_;
};

}  // namespace ruleparse

/// Parse ECA rule source. Throws SyntaxError (with line/column) or TypeError
/// for a PRE that cannot be boolean.
inline AgentRule parse_rule(std::string_view source) {
  if (source.empty()) throw SyntaxError(1, 1, "empty rule source");
  return ruleparse::Parser(source).parse_rule();
}

inline std::string render_rule(const AgentRule& rule) {
  std::string out;
  if (!rule.subscriptions.empty()) {
    out += "ON ";
    for (std::size_t i = 0; i < rule.subscriptions.size(); ++i) {
      if (i) out += ", ";
      out += rule.subscriptions[i].str();
    }
    out += ' ';
  }
  out += "IF ";
  out += render_expr(rule.pre);
  out += " THEN ";
  for (std::size_t i = 0; i < rule.actions.size(); ++i) {
    if (i) out += "; ";
    const Action& a = rule.actions[i];
    switch (a.op) {
      case Op::create: out += "CREATE "; break;
      case Op::update: out += "UPDATE "; break;
      case Op::remove: out += "DELETE "; break;
    }
    out += a.target.str();
    if (a.op != Op::remove) {
      out += " = ";
      out += render_expr(a.payload);
    }
  }
  return out;
}

}  // namespace orgami
