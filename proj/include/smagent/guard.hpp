#pragma once

// Guard expression language evaluated against the belief's key-value store.
//
//   or-expr    := and-expr ("or" and-expr)*
//   and-expr   := unary ("and" unary)*
//   unary      := "not" unary | "exists" path | comparison | "(" or-expr ")"
//   comparison := operand (op operand)?
//   op         := == | != | < | <= | > | >= | contains
//   operand    := path | 'str' | "str" | number | true | false | null
//
// A bare operand tests truthiness: present, not null, not false, not "".

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "json.hpp"
#include "smagent/error.hpp"

namespace smagent {

using Json = nlohmann::json;

namespace guard {

struct Path {
  std::vector<std::string> segments;

  [[nodiscard]] std::string dotted() const {
    std::string out;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (i != 0) out += '.';
      out += segments[i];
    }
    return out;
  }
  bool operator==(const Path&) const = default;
};

/// Either a belief path or a literal (string, number, boolean or null).
struct Operand {
  std::variant<Path, Json> value;

  [[nodiscard]] bool is_path() const { return std::holds_alternative<Path>(value); }
  [[nodiscard]] const Path& path() const { return std::get<Path>(value); }
  [[nodiscard]] const Json& literal() const { return std::get<Json>(value); }
  bool operator==(const Operand&) const = default;
};

enum class CompareOp { eq, ne, lt, le, gt, ge, contains };

constexpr std::string_view to_string(CompareOp op) noexcept {
  switch (op) {
    case CompareOp::eq: return "==";
    case CompareOp::ne: return "!=";
    case CompareOp::lt: return "<";
    case CompareOp::le: return "<=";
    case CompareOp::gt: return ">";
    case CompareOp::ge: return ">=";
    case CompareOp::contains: return "contains";
  }
  return "?";
}

struct GuardExpr {
  enum class Kind { Or, And, Not, Compare, Truthy, Exists };

  Kind kind = Kind::Truthy;
  std::vector<GuardExpr> children;  // Or/And: two or more, Not: exactly one
  Operand lhs;                      // Compare, Truthy
  CompareOp op = CompareOp::eq;     // Compare
  Operand rhs;                      // Compare
  Path path;                        // Exists

  static GuardExpr make_or(std::vector<GuardExpr> terms) {
    GuardExpr e;
    e.kind = Kind::Or;
    e.children = std::move(terms);
    return e;
  }
  static GuardExpr make_and(std::vector<GuardExpr> terms) {
    GuardExpr e;
    e.kind = Kind::And;
    e.children = std::move(terms);
    return e;
  }
  static GuardExpr make_not(GuardExpr inner) {
    GuardExpr e;
    e.kind = Kind::Not;
    e.children.push_back(std::move(inner));
    return e;
  }
  static GuardExpr make_compare(Operand lhs, CompareOp op, Operand rhs) {
    GuardExpr e;
    e.kind = Kind::Compare;
    e.lhs = std::move(lhs);
    e.op = op;
    e.rhs = std::move(rhs);
    return e;
  }
  static GuardExpr make_truthy(Operand operand) {
    GuardExpr e;
    e.kind = Kind::Truthy;
    e.lhs = std::move(operand);
    return e;
  }
  static GuardExpr make_exists(Path path) {
    GuardExpr e;
    e.kind = Kind::Exists;
    e.path = std::move(path);
    return e;
  }

  bool operator==(const GuardExpr& other) const {
    if (kind != other.kind) return false;
    switch (kind) {
      case Kind::Or:
      case Kind::And:
      case Kind::Not: return children == other.children;
      case Kind::Compare: return lhs == other.lhs && op == other.op && rhs == other.rhs;
      case Kind::Truthy: return lhs == other.lhs;
      case Kind::Exists: return path == other.path;
    }
    return false;
  }
};

namespace detail {

inline constexpr std::size_t kMaxNesting = 128;

enum class Tok { End, Path, Number, String, True, False, Null, And, Or, Not, Exists, Op, LParen, RParen };

struct Token {
  Tok kind = Tok::End;
  std::size_t pos = 0;
  Path path;
  Json value;
  CompareOp op = CompareOp::eq;
};

inline bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c); }

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    skip_space();
    Token t;
    t.pos = pos_;
    if (pos_ >= text_.size()) return t;
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      t.kind = Tok::LParen;
      return t;
    }
    if (c == ')') {
      ++pos_;
      t.kind = Tok::RParen;
      return t;
    }
    if (c == '\'' || c == '"') return lex_string(t);
    if (is_digit(c) || (c == '-' && pos_ + 1 < text_.size() && is_digit(text_[pos_ + 1])))
      return lex_number(t);
    if (c == '=' || c == '!' || c == '<' || c == '>') return lex_op(t);
    if (is_ident_start(c)) return lex_word(t);
    fail(pos_, {"operand", "operator", "'('", "')'"}, std::string("unexpected character"));
  }

 private:
  [[noreturn]] static void fail(std::size_t pos, std::vector<std::string> expected, const std::string& what) {
    throw GuardSyntaxError(pos, std::move(expected), what);
  }

  void skip_space() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' || text_[pos_] == '\r'))
      ++pos_;
  }

  Token lex_string(Token t) {
    const char quote = text_[pos_++];
    std::string out;
    while (true) {
      if (pos_ >= text_.size()) fail(pos_, {"closing quote"}, "unterminated string");
      const char c = text_[pos_++];
      if (c == quote) break;
      if (c == '\\') {
        if (pos_ >= text_.size()) fail(pos_, {"escape character"}, "unterminated escape");
        const char e = text_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          default: out += e; break;
        }
        continue;
      }
      out += c;
    }
    t.kind = Tok::String;
    t.value = out;
    return t;
  }

  Token lex_number(Token t) {
    const std::size_t start = pos_;
    bool is_float = false;
    if (text_[pos_] == '-') ++pos_;
    while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
    if (pos_ + 1 < text_.size() && text_[pos_] == '.' && is_digit(text_[pos_ + 1])) {
      is_float = true;
      ++pos_;
      while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && is_digit(text_[p])) {
        is_float = true;
        pos_ = p;
        while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
      }
    }
    if (pos_ < text_.size() && is_ident_start(text_[pos_]))
      fail(pos_, {"operator", "end of input"}, "malformed number");
    const std::string_view digits = text_.substr(start, pos_ - start);
    t.kind = Tok::Number;
    if (!is_float) {
      std::int64_t v = 0;
      const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (res.ec == std::errc{} && res.ptr == digits.data() + digits.size()) {
        t.value = v;
        return t;
      }
    }
    double d = 0;
    const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), d);
    if (res.ec != std::errc{} || !std::isfinite(d)) fail(start, {"number"}, "number out of range");
    t.value = d;
    return t;
  }

  Token lex_op(Token t) {
    const char c = text_[pos_];
    const bool eq_next = pos_ + 1 < text_.size() && text_[pos_ + 1] == '=';
    t.kind = Tok::Op;
    switch (c) {
      case '=':
        if (!eq_next) fail(pos_, {"'=='"}, "single '=' is not an operator");
        t.op = CompareOp::eq;
        break;
      case '!':
        if (!eq_next) fail(pos_, {"'!='"}, "'!' is not an operator; use 'not'");
        t.op = CompareOp::ne;
        break;
      case '<': t.op = eq_next ? CompareOp::le : CompareOp::lt; break;
      default: t.op = eq_next ? CompareOp::ge : CompareOp::gt; break;
    }
    pos_ += eq_next ? 2 : 1;
    return t;
  }

  Token lex_word(Token t) {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    const std::string_view word = text_.substr(start, pos_ - start);
    if (word == "and") t.kind = Tok::And;
    else if (word == "or") t.kind = Tok::Or;
    else if (word == "not") t.kind = Tok::Not;
    else if (word == "exists") t.kind = Tok::Exists;
    else if (word == "true") { t.kind = Tok::True; t.value = true; }
    else if (word == "false") { t.kind = Tok::False; t.value = false; }
    else if (word == "null") { t.kind = Tok::Null; t.value = nullptr; }
    else if (word == "contains") { t.kind = Tok::Op; t.op = CompareOp::contains; }
    if (t.kind != Tok::End) {
      if (pos_ < text_.size() && text_[pos_] == '.') fail(pos_, {"operator", "end of input"}, "keyword used as path");
      return t;
    }
    t.kind = Tok::Path;
    t.path.segments.emplace_back(word);
    // Later segments may be any identifier-like word (keywords included) or an index.
    while (pos_ + 1 < text_.size() && text_[pos_] == '.' && is_ident_char(text_[pos_ + 1])) {
      const std::size_t seg = ++pos_;
      while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
      t.path.segments.emplace_back(text_.substr(seg, pos_ - seg));
    }
    if (pos_ < text_.size() && text_[pos_] == '.') fail(pos_ + 1, {"path segment"}, "dangling '.' in path");
    return t;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { advance(); }

  GuardExpr parse() {
    GuardExpr e = or_expr();
    if (cur_.kind != Tok::End) fail({"'and'", "'or'", "end of input"}, "unexpected token");
    return e;
  }

 private:
  [[noreturn]] void fail(std::vector<std::string> expected, const std::string& what) const {
    throw GuardSyntaxError(cur_.pos, std::move(expected), what);
  }

  void advance() { cur_ = lexer_.next(); }

  GuardExpr or_expr() {
    std::vector<GuardExpr> terms;
    terms.push_back(and_expr());
    while (cur_.kind == Tok::Or) {
      advance();
      terms.push_back(and_expr());
    }
    if (terms.size() == 1) return std::move(terms.front());
    return GuardExpr::make_or(std::move(terms));
  }

  GuardExpr and_expr() {
    std::vector<GuardExpr> terms;
    terms.push_back(unary());
    while (cur_.kind == Tok::And) {
      advance();
      terms.push_back(unary());
    }
    if (terms.size() == 1) return std::move(terms.front());
    return GuardExpr::make_and(std::move(terms));
  }

  GuardExpr unary() {
    if (++depth_ > kMaxNesting) fail({}, "expression nested too deeply");
    GuardExpr out;
    switch (cur_.kind) {
      case Tok::Not:
        advance();
        out = GuardExpr::make_not(unary());
        break;
      case Tok::Exists: {
        advance();
        if (cur_.kind != Tok::Path) fail({"path"}, "'exists' requires a path");
        Path p = cur_.path;
        advance();
        out = GuardExpr::make_exists(std::move(p));
        break;
      }
      case Tok::LParen:
        advance();
        out = or_expr();
        if (cur_.kind != Tok::RParen) fail({"')'", "'and'", "'or'"}, "missing ')'");
        advance();
        break;
      default: out = comparison(); break;
    }
    --depth_;
    return out;
  }

  GuardExpr comparison() {
    Operand lhs = operand();
    if (cur_.kind != Tok::Op) return GuardExpr::make_truthy(std::move(lhs));
    const CompareOp op = cur_.op;
    advance();
    Operand rhs = operand();
    return GuardExpr::make_compare(std::move(lhs), op, std::move(rhs));
  }

  Operand operand() {
    Operand o;
    switch (cur_.kind) {
      case Tok::Path: o.value = cur_.path; break;
      case Tok::Number:
      case Tok::String:
      case Tok::True:
      case Tok::False:
      case Tok::Null: o.value = cur_.value; break;
      default:
        fail({"path", "literal", "'('", "'not'", "'exists'"}, "expected an operand");
    }
    advance();
    return o;
  }

  Lexer lexer_;
  Token cur_;
  std::size_t depth_ = 0;
};

inline bool truthy(const Json& v) {
  if (v.is_null()) return false;
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) return !v.get_ref<const std::string&>().empty();
  return true;
}

inline std::string describe(const Json& v) { return v.dump(-1, ' ', false, Json::error_handler_t::replace); }

}  // namespace detail

/// Parses guard DSL text. Throws GuardSyntaxError with the byte offset of the
/// offending token.
inline GuardExpr parse_guard(std::string_view text) { return detail::Parser(text).parse(); }

inline std::string to_string(const Operand& o) {
  if (o.is_path()) return o.path().dotted();
  const Json& v = o.literal();
  if (!v.is_string()) return v.dump();
  std::string out = "\"";
  for (const char c : v.get_ref<const std::string&>()) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c; break;
    }
  }
  return out + "\"";
}

/// Canonical text; always re-parses to an equal expression.
inline std::string to_string(const GuardExpr& e) {
  using Kind = GuardExpr::Kind;
  auto nested = [](const GuardExpr& c) {
    const bool wrap = c.kind == Kind::Or || c.kind == Kind::And;
    return wrap ? "(" + to_string(c) + ")" : to_string(c);
  };
  switch (e.kind) {
    case Kind::Or:
    case Kind::And: {
      std::string out;
      const char* sep = e.kind == Kind::Or ? " or " : " and ";
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i != 0) out += sep;
        out += nested(e.children[i]);
      }
      return out;
    }
    case Kind::Not: return "not " + nested(e.children.front());
    case Kind::Compare:
      return to_string(e.lhs) + " " + std::string(to_string(e.op)) + " " + to_string(e.rhs);
    case Kind::Truthy: return to_string(e.lhs);
    case Kind::Exists: return "exists " + e.path.dotted();
  }
  return {};
}

/// Resolves a path to a value, or nullopt when the path is absent.
using Lookup = std::function<std::optional<Json>(const Path&)>;

namespace detail {

inline std::optional<Json> resolve(const Operand& o, const Lookup& lookup) {
  if (o.is_path()) return lookup(o.path());
  return o.literal();
}

inline bool compare(const Json& a, CompareOp op, const Json& b) {
  switch (op) {
    case CompareOp::eq: return a == b;
    case CompareOp::ne: return a != b;
    case CompareOp::contains:
      if (a.is_string() && b.is_string())
        return a.get_ref<const std::string&>().find(b.get_ref<const std::string&>()) != std::string::npos;
      if (a.is_array()) {
        for (const auto& item : a)
          if (item == b) return true;
        return false;
      }
      if (a.is_object() && b.is_string()) return a.contains(b.get<std::string>());
      throw Error(Errc::GuardTypeError, "cannot test " + describe(a) + " contains " + describe(b));
    default: break;
  }
  int order = 0;
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>();
    const double y = b.get<double>();
    order = x < y ? -1 : (x > y ? 1 : 0);
  } else if (a.is_string() && b.is_string()) {
    const int c = a.get_ref<const std::string&>().compare(b.get_ref<const std::string&>());
    order = c < 0 ? -1 : (c > 0 ? 1 : 0);
  } else {
    throw Error(Errc::GuardTypeError, "cannot order " + describe(a) + " " + std::string(to_string(op)) +
                                          " " + describe(b));
  }
  switch (op) {
    case CompareOp::lt: return order < 0;
    case CompareOp::le: return order <= 0;
    case CompareOp::gt: return order > 0;
    default: return order >= 0;
  }
}

}  // namespace detail

/// Evaluates a guard; an absent path makes `exists` and truthiness false and
/// every comparison false except `!=`, which is true.
inline bool evaluate(const GuardExpr& e, const Lookup& lookup) {
  using Kind = GuardExpr::Kind;
  switch (e.kind) {
    case Kind::Or:
      for (const auto& c : e.children)
        if (evaluate(c, lookup)) return true;
      return false;
    case Kind::And:
      for (const auto& c : e.children)
        if (!evaluate(c, lookup)) return false;
      return true;
    case Kind::Not: return !evaluate(e.children.front(), lookup);
    case Kind::Exists: return lookup(e.path).has_value();
    case Kind::Truthy: {
      const auto v = detail::resolve(e.lhs, lookup);
      return v && detail::truthy(*v);
    }
    case Kind::Compare: {
      const auto a = detail::resolve(e.lhs, lookup);
      const auto b = detail::resolve(e.rhs, lookup);
      if (!a || !b) return e.op == CompareOp::ne;
      return detail::compare(*a, e.op, *b);
    }
  }
  return false;
}

/// Evaluates against a plain JSON object, resolving paths by object key or
/// array index.
inline std::optional<Json> lookup_in(const Json& root, const Path& path) {
  const Json* cur = &root;
  for (const auto& seg : path.segments) {
    if (cur->is_object()) {
      auto it = cur->find(seg);
      if (it == cur->end()) return std::nullopt;
      cur = &*it;
    } else if (cur->is_array()) {
      std::size_t idx = 0;
      const auto res = std::from_chars(seg.data(), seg.data() + seg.size(), idx);
      if (res.ec != std::errc{} || res.ptr != seg.data() + seg.size() || idx >= cur->size())
        return std::nullopt;
      cur = &(*cur)[idx];
    } else {
      return std::nullopt;
    }
  }
  return *cur;
}

}  // namespace guard
}  // namespace smagent
