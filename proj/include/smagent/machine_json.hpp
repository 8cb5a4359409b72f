#pragma once

// JSON machine format (`.sm.json`). Exact key sets:
//   machine    {name, states, transitions}
//   state      {name, description, tags?, entry?, exit?, substates?, initial?}
//   transition {source, target, event, guard?, actions?, trigger?}
//   guard      {expr} | {action}
//   action     {name, output_key?, params?}
//   param      {name, source, datatype, description?, source_key?}

#include <cstddef>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "smagent/error.hpp"
#include "smagent/machine.hpp"

namespace smagent {

namespace json_detail {

inline constexpr std::size_t kMaxStateDepth = 64;

inline std::string escape_pointer(std::string_view token) {
  std::string out;
  for (char c : token) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

inline std::string child(const std::string& ptr, std::string_view key) { return ptr + "/" + escape_pointer(key); }
inline std::string child(const std::string& ptr, std::size_t index) { return ptr + "/" + std::to_string(index); }

inline bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  const auto start = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  if (!start(s.front())) return false;
  for (char c : s)
    if (!start(c) && !(c >= '0' && c <= '9')) return false;
  return true;
}

/// Parses text as JSON, converting nlohmann errors to JsonSyntaxError with a
/// 1-based line and column.
inline Json parse_json_text(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t upto = e.byte == 0 ? 0 : std::min<std::size_t>(e.byte - 1, text.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string detail = e.what();
    if (auto pos = detail.find("syntax error"); pos != std::string::npos) detail = detail.substr(pos);
    throw JsonSyntaxError(line, col, detail);
  } catch (const Json::exception& e) {
    // e.g. numbers outside the representable range
    throw JsonSyntaxError(1, 1, e.what());
  }
}

class Reader {
 public:
  static void expect_object(const Json& j, const std::string& ptr) {
    if (!j.is_object()) throw SchemaError(ptr, "expected an object");
  }

  static void check_keys(const Json& j, const std::string& ptr, std::initializer_list<std::string_view> allowed) {
    for (const auto& item : j.items()) {
      bool ok = false;
      for (auto a : allowed) ok = ok || item.key() == a;
      if (!ok) throw SchemaError(child(ptr, item.key()), "unknown key");
    }
  }

  static const Json& required(const Json& j, const std::string& ptr, std::string_view key) {
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError(child(ptr, key), "missing required key");
    return *it;
  }

  static std::string string_at(const Json& j, const std::string& ptr) {
    if (!j.is_string()) throw SchemaError(ptr, "expected a string");
    return j.get<std::string>();
  }

  static std::string identifier_at(const Json& j, const std::string& ptr) {
    std::string s = string_at(j, ptr);
    if (!is_identifier(s)) throw SchemaError(ptr, "'" + s + "' is not an identifier");
    return s;
  }

  static const Json& array_at(const Json& j, const std::string& ptr) {
    if (!j.is_array()) throw SchemaError(ptr, "expected an array");
    return j;
  }

  static ParameterSpec param(const Json& j, const std::string& ptr) {
    expect_object(j, ptr);
    check_keys(j, ptr, {"name", "source", "datatype", "description", "source_key"});
    ParameterSpec p;
    p.name = identifier_at(required(j, ptr, "name"), child(ptr, "name"));
    const std::string source = string_at(required(j, ptr, "source"), child(ptr, "source"));
    if (source == "external") p.source = ParamSource::external;
    else if (source == "internal") p.source = ParamSource::internal;
    else throw SchemaError(child(ptr, "source"), "expected 'external' or 'internal'");
    const std::string dt = string_at(required(j, ptr, "datatype"), child(ptr, "datatype"));
    if (dt == "string") p.datatype = DataType::string;
    else if (dt == "number") p.datatype = DataType::number;
    else if (dt == "boolean") p.datatype = DataType::boolean;
    else if (dt == "json") p.datatype = DataType::json;
    else throw SchemaError(child(ptr, "datatype"), "expected string, number, boolean or json");
    if (auto it = j.find("description"); it != j.end()) p.description = string_at(*it, child(ptr, "description"));
    if (auto it = j.find("source_key"); it != j.end()) {
      if (p.source != ParamSource::internal) throw SchemaError(child(ptr, "source_key"), "only internal parameters take a source_key");
      p.source_key = identifier_at(*it, child(ptr, "source_key"));
    }
    return p;
  }

  static ActionSpec action(const Json& j, const std::string& ptr) {
    expect_object(j, ptr);
    check_keys(j, ptr, {"name", "output_key", "params"});
    ActionSpec a;
    a.name = identifier_at(required(j, ptr, "name"), child(ptr, "name"));
    if (auto it = j.find("output_key"); it != j.end()) a.output_key = identifier_at(*it, child(ptr, "output_key"));
    if (auto it = j.find("params"); it != j.end()) {
      const std::string pp = child(ptr, "params");
      const Json& arr = array_at(*it, pp);
      for (std::size_t i = 0; i < arr.size(); ++i) {
        ParameterSpec p = param(arr[i], child(pp, i));
        for (const auto& existing : a.params)
          if (existing.name == p.name) throw SchemaError(child(child(pp, i), "name"), "duplicate parameter '" + p.name + "'");
        a.params.push_back(std::move(p));
      }
    }
    return a;
  }

  static Condition condition(const Json& j, const std::string& ptr) {
    expect_object(j, ptr);
    check_keys(j, ptr, {"expr", "action"});
    const bool has_expr = j.contains("expr");
    const bool has_action = j.contains("action");
    if (has_expr == has_action) throw SchemaError(ptr, "guard needs exactly one of 'expr' or 'action'");
    if (has_expr) return Condition::expr(string_at(j.at("expr"), child(ptr, "expr")));
    return Condition::action(identifier_at(j.at("action"), child(ptr, "action")));
  }

  static State state(const Json& j, const std::string& ptr, std::size_t depth) {
    if (depth > kMaxStateDepth) throw SchemaError(ptr, "states nested too deeply");
    expect_object(j, ptr);
    check_keys(j, ptr, {"name", "description", "tags", "entry", "exit", "substates", "initial"});
    State s;
    s.name = identifier_at(required(j, ptr, "name"), child(ptr, "name"));
    s.description = string_at(required(j, ptr, "description"), child(ptr, "description"));
    if (auto it = j.find("tags"); it != j.end()) {
      const std::string tp = child(ptr, "tags");
      const Json& arr = array_at(*it, tp);
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string tag = string_at(arr[i], child(tp, i));
        if (tag == "start") s.tags.insert(Tag::start);
        else if (tag == "end") s.tags.insert(Tag::end);
        else throw SchemaError(child(tp, i), "unknown tag '" + tag + "'");
      }
    }
    if (auto it = j.find("entry"); it != j.end()) s.entry = action(*it, child(ptr, "entry"));
    if (auto it = j.find("exit"); it != j.end()) s.exit = action(*it, child(ptr, "exit"));
    if (auto it = j.find("substates"); it != j.end()) {
      const std::string sp = child(ptr, "substates");
      const Json& arr = array_at(*it, sp);
      for (std::size_t i = 0; i < arr.size(); ++i) s.substates.push_back(state(arr[i], child(sp, i), depth + 1));
    }
    if (auto it = j.find("initial"); it != j.end()) s.initial = identifier_at(*it, child(ptr, "initial"));
    return s;
  }

  static Transition transition(const Json& j, const std::string& ptr) {
    expect_object(j, ptr);
    check_keys(j, ptr, {"source", "target", "event", "guard", "actions", "trigger"});
    Transition t;
    t.source = identifier_at(required(j, ptr, "source"), child(ptr, "source"));
    t.target = identifier_at(required(j, ptr, "target"), child(ptr, "target"));
    t.event = identifier_at(required(j, ptr, "event"), child(ptr, "event"));
    if (auto it = j.find("guard"); it != j.end()) t.guard = condition(*it, child(ptr, "guard"));
    if (auto it = j.find("actions"); it != j.end()) {
      const std::string ap = child(ptr, "actions");
      const Json& arr = array_at(*it, ap);
      for (std::size_t i = 0; i < arr.size(); ++i) t.actions.push_back(action(arr[i], child(ap, i)));
    }
    if (auto it = j.find("trigger"); it != j.end()) {
      const std::string trig = string_at(*it, child(ptr, "trigger"));
      if (trig == "internal") t.trigger = Trigger::internal;
      else if (trig == "external") t.trigger = Trigger::external;
      else throw SchemaError(child(ptr, "trigger"), "expected 'internal' or 'external'");
    }
    return t;
  }
};

inline nlohmann::ordered_json write_param(const ParameterSpec& p) {
  nlohmann::ordered_json j;
  j["name"] = p.name;
  j["source"] = to_string(p.source);
  j["datatype"] = to_string(p.datatype);
  if (!p.description.empty()) j["description"] = p.description;
  if (p.source_key) j["source_key"] = *p.source_key;
  return j;
}

inline nlohmann::ordered_json write_action(const ActionSpec& a) {
  nlohmann::ordered_json j;
  j["name"] = a.name;
  if (a.output_key) j["output_key"] = *a.output_key;
  if (!a.params.empty()) {
    j["params"] = nlohmann::ordered_json::array();
    for (const auto& p : a.params) j["params"].push_back(write_param(p));
  }
  return j;
}

inline nlohmann::ordered_json write_state(const State& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["description"] = s.description;
  if (!s.tags.empty()) {
    j["tags"] = nlohmann::ordered_json::array();
    for (Tag t : s.tags) j["tags"].push_back(to_string(t));
  }
  if (s.entry) j["entry"] = write_action(*s.entry);
  if (s.exit) j["exit"] = write_action(*s.exit);
  if (!s.substates.empty()) {
    j["substates"] = nlohmann::ordered_json::array();
    for (const auto& c : s.substates) j["substates"].push_back(write_state(c));
  }
  if (s.initial) j["initial"] = *s.initial;
  return j;
}

}  // namespace json_detail

/// Parses a machine document. The result is structurally faithful but not yet
/// validated; see validate_machine.
inline StateMachine parse_machine(std::string_view text) {
  using json_detail::Reader;
  using json_detail::child;
  const Json doc = json_detail::parse_json_text(text);
  const std::string root;
  Reader::expect_object(doc, root);
  Reader::check_keys(doc, root, {"name", "states", "transitions"});
  StateMachine sm;
  sm.name = Reader::identifier_at(Reader::required(doc, root, "name"), "/name");
  const Json& states = Reader::array_at(Reader::required(doc, root, "states"), "/states");
  for (std::size_t i = 0; i < states.size(); ++i) sm.states.push_back(Reader::state(states[i], child("/states", i), 0));
  const Json& transitions = Reader::array_at(Reader::required(doc, root, "transitions"), "/transitions");
  for (std::size_t i = 0; i < transitions.size(); ++i)
    sm.transitions.push_back(Reader::transition(transitions[i], child("/transitions", i)));
  return sm;
}

/// Schema key order, two-space indentation, trailing newline.
inline std::string serialize_machine(const StateMachine& sm) {
  nlohmann::ordered_json j;
  j["name"] = sm.name;
  j["states"] = nlohmann::ordered_json::array();
  for (const auto& s : sm.states) j["states"].push_back(json_detail::write_state(s));
  j["transitions"] = nlohmann::ordered_json::array();
  for (const auto& t : sm.transitions) {
    nlohmann::ordered_json tj;
    tj["source"] = t.source;
    tj["target"] = t.target;
    tj["event"] = t.event;
    if (t.guard) {
      if (t.guard->kind == Condition::Kind::expression) tj["guard"] = {{"expr", t.guard->expression}};
      else tj["guard"] = {{"action", t.guard->action_name}};
    }
    if (!t.actions.empty()) {
      tj["actions"] = nlohmann::ordered_json::array();
      for (const auto& a : t.actions) tj["actions"].push_back(json_detail::write_action(a));
    }
    if (t.trigger == Trigger::external) tj["trigger"] = "external";
    j["transitions"].push_back(std::move(tj));
  }
  return j.dump(2) + "\n";
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline StateMachine load_machine_file(const std::string& path) { return parse_machine(read_text_file(path)); }

}  // namespace smagent
