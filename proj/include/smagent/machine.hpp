#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "smagent/error.hpp"
#include "smagent/guard.hpp"

namespace smagent {

enum class Tag { start, end };
enum class Trigger { internal, external };
enum class ParamSource { external, internal };
enum class DataType { string, number, boolean, json };

constexpr std::string_view to_string(Tag t) noexcept { return t == Tag::start ? "start" : "end"; }
constexpr std::string_view to_string(Trigger t) noexcept {
  return t == Trigger::internal ? "internal" : "external";
}
constexpr std::string_view to_string(ParamSource s) noexcept {
  return s == ParamSource::external ? "external" : "internal";
}
constexpr std::string_view to_string(DataType d) noexcept {
  switch (d) {
    case DataType::string: return "string";
    case DataType::number: return "number";
    case DataType::boolean: return "boolean";
    case DataType::json: return "json";
  }
  return "json";
}

struct ParameterSpec {
  std::string name;
  ParamSource source = ParamSource::external;
  DataType datatype = DataType::string;
  std::string description;
  std::optional<std::string> source_key;  // internal only

  /// Belief key an internal parameter is read from.
  [[nodiscard]] const std::string& key() const { return source_key ? *source_key : name; }
  bool operator==(const ParameterSpec&) const = default;
};

struct ActionSpec {
  std::string name;
  std::optional<std::string> output_key;
  std::vector<ParameterSpec> params;

  [[nodiscard]] const std::string& effective_output_key() const { return output_key ? *output_key : name; }
  bool operator==(const ActionSpec&) const = default;
};

/// Guard of a transition: a DSL expression over the belief, or the name of an
/// action whose output is read as a boolean.
struct Condition {
  enum class Kind { expression, action };

  Kind kind = Kind::expression;
  std::string expression;
  std::string action_name;

  static Condition expr(std::string text) { return {Kind::expression, std::move(text), {}}; }
  static Condition action(std::string name) { return {Kind::action, {}, std::move(name)}; }

  [[nodiscard]] const std::string& text() const { return kind == Kind::expression ? expression : action_name; }
  bool operator==(const Condition&) const = default;
};

struct Transition {
  std::string source;
  std::string target;
  std::string event;
  std::optional<Condition> guard;
  std::vector<ActionSpec> actions;
  Trigger trigger = Trigger::internal;

  bool operator==(const Transition&) const = default;
};

struct State {
  std::string name;
  std::string description;
  std::set<Tag> tags;
  std::optional<ActionSpec> entry;
  std::optional<ActionSpec> exit;
  std::vector<State> substates;
  std::optional<std::string> initial;

  [[nodiscard]] bool is_composite() const { return !substates.empty(); }
  [[nodiscard]] bool has_tag(Tag t) const { return tags.count(t) != 0; }
  bool operator==(const State&) const = default;
};

struct StateMachine {
  std::string name;
  std::vector<State> states;
  std::vector<Transition> transitions;

  bool operator==(const StateMachine&) const = default;
};

/// Name lookup, parent links and outgoing transitions of a machine. Holds a
/// pointer to the machine, which must outlive the index. Duplicate names keep
/// the first occurrence (validation reports the rest).
class MachineIndex {
 public:
  explicit MachineIndex(const StateMachine& sm) : sm_(&sm) {
    for (const auto& s : sm.states) add(s, nullptr, 0);
    for (std::size_t i = 0; i < sm.transitions.size(); ++i) outgoing_[sm.transitions[i].source].push_back(i);
  }

  [[nodiscard]] const StateMachine& machine() const { return *sm_; }

  [[nodiscard]] const State* find(std::string_view name) const {
    auto it = nodes_.find(name);
    return it == nodes_.end() ? nullptr : it->second.state;
  }

  [[nodiscard]] const State& at(std::string_view name) const {
    const State* s = find(name);
    if (s == nullptr) throw Error(Errc::UnknownState, "no state named '" + std::string(name) + "'");
    return *s;
  }

  [[nodiscard]] bool contains(std::string_view name) const { return find(name) != nullptr; }

  [[nodiscard]] const State* parent(std::string_view name) const { return node(name).parent; }

  /// Ancestors, innermost first, excluding the state itself.
  [[nodiscard]] std::vector<std::string> parent_chain(std::string_view name) const {
    std::vector<std::string> out;
    for (const State* p = node(name).parent; p != nullptr; p = node(p->name).parent) out.push_back(p->name);
    return out;
  }

  /// The state's own outgoing transitions in declaration order, then each
  /// ancestor's, innermost ancestor first.
  [[nodiscard]] std::vector<const Transition*> enabled_transitions(std::string_view name) const {
    std::vector<const Transition*> out;
    auto append = [&](std::string_view s) {
      auto it = outgoing_.find(s);
      if (it == outgoing_.end()) return;
      for (std::size_t i : it->second) out.push_back(&sm_->transitions[i]);
    };
    append(at(name).name);
    for (const auto& p : parent_chain(name)) append(p);
    return out;
  }

  /// Path from `name` down through `initial` links to a simple state.
  [[nodiscard]] std::vector<std::string> initial_entry_path(std::string_view name) const {
    std::vector<std::string> out;
    const State* s = &at(name);
    out.push_back(s->name);
    while (s->is_composite()) {
      const State* next = nullptr;
      if (s->initial) {
        for (const auto& child : s->substates)
          if (child.name == *s->initial) next = &child;
      }
      if (next == nullptr)
        throw Error(Errc::InvalidMachine, "composite state '" + s->name + "' has no valid initial substate");
      s = next;
      out.push_back(s->name);
    }
    return out;
  }

  [[nodiscard]] bool is_end(std::string_view name) const { return at(name).has_tag(Tag::end); }

  /// The unique top-level start state.
  [[nodiscard]] const std::string& start_state() const {
    const State* found = nullptr;
    for (const auto& s : sm_->states) {
      if (!s.has_tag(Tag::start)) continue;
      if (found != nullptr) throw Error(Errc::InvalidMachine, "more than one start state");
      found = &s;
    }
    if (found == nullptr) throw Error(Errc::InvalidMachine, "no top-level start state");
    return found->name;
  }

  /// Depth below the top level (top-level states are 0).
  [[nodiscard]] std::size_t depth(std::string_view name) const { return node(name).depth; }

  /// Every state, pre-order.
  [[nodiscard]] const std::vector<const State*>& all_states() const { return order_; }

 private:
  struct Node {
    const State* state = nullptr;
    const State* parent = nullptr;
    std::size_t depth = 0;
  };

  void add(const State& s, const State* parent, std::size_t depth) {
    order_.push_back(&s);
    nodes_.try_emplace(s.name, Node{&s, parent, depth});
    for (const auto& child : s.substates) add(child, &s, depth + 1);
  }

  [[nodiscard]] const Node& node(std::string_view name) const {
    auto it = nodes_.find(name);
    if (it == nodes_.end()) throw Error(Errc::UnknownState, "no state named '" + std::string(name) + "'");
    return it->second;
  }

  const StateMachine* sm_;
  std::map<std::string, Node, std::less<>> nodes_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> outgoing_;
  std::vector<const State*> order_;
};

inline std::string start_state(const StateMachine& sm) { return MachineIndex(sm).start_state(); }
inline std::vector<std::string> parent_chain(const StateMachine& sm, std::string_view state) {
  return MachineIndex(sm).parent_chain(state);
}
inline std::vector<Transition> enabled_transitions(const StateMachine& sm, std::string_view state) {
  std::vector<Transition> out;
  for (const Transition* t : MachineIndex(sm).enabled_transitions(state)) out.push_back(*t);
  return out;
}
inline std::vector<std::string> initial_entry_path(const StateMachine& sm, std::string_view state) {
  return MachineIndex(sm).initial_entry_path(state);
}
inline bool is_end(const StateMachine& sm, std::string_view state) { return MachineIndex(sm).is_end(state); }

// ---------------------------------------------------------------------------
// Validation

enum class ViolationClass {
  DuplicateState,
  MissingStart,
  MultipleStart,
  MissingEnd,
  DanglingTransition,
  EndHasOutgoing,
  CompositeWithoutInitial,
  UnknownAction,
  BadGuard,
  UnreachableState,
};

constexpr std::string_view to_string(ViolationClass c) noexcept {
  switch (c) {
    case ViolationClass::DuplicateState: return "DuplicateState";
    case ViolationClass::MissingStart: return "MissingStart";
    case ViolationClass::MultipleStart: return "MultipleStart";
    case ViolationClass::MissingEnd: return "MissingEnd";
    case ViolationClass::DanglingTransition: return "DanglingTransition";
    case ViolationClass::EndHasOutgoing: return "EndHasOutgoing";
    case ViolationClass::CompositeWithoutInitial: return "CompositeWithoutInitial";
    case ViolationClass::UnknownAction: return "UnknownAction";
    case ViolationClass::BadGuard: return "BadGuard";
    case ViolationClass::UnreachableState: return "UnreachableState";
  }
  return "?";
}

struct Violation {
  ViolationClass cls;
  std::string subject;
  std::string message;

  [[nodiscard]] bool is_warning() const { return cls == ViolationClass::UnreachableState; }
  auto operator<=>(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  /// True when no error-class violation is present; warnings are allowed.
  [[nodiscard]] bool ok() const {
    return std::none_of(violations.begin(), violations.end(), [](const Violation& v) { return !v.is_warning(); });
  }
  [[nodiscard]] bool empty() const { return violations.empty(); }
  [[nodiscard]] std::vector<ViolationClass> classes() const {
    std::vector<ViolationClass> out;
    for (const auto& v : violations) out.push_back(v.cls);
    return out;
  }
};

namespace detail {

inline void collect_actions(const StateMachine& sm, std::vector<std::pair<std::string, std::string>>& out) {
  std::vector<const State*> stack;
  for (const auto& s : sm.states) stack.push_back(&s);
  while (!stack.empty()) {
    const State* s = stack.back();
    stack.pop_back();
    if (s->entry) out.emplace_back(s->entry->name, "entry of '" + s->name + "'");
    if (s->exit) out.emplace_back(s->exit->name, "exit of '" + s->name + "'");
    for (const auto& c : s->substates) stack.push_back(&c);
  }
  for (const auto& t : sm.transitions) {
    const std::string where = "transition " + t.source + " --" + t.event + "--> " + t.target;
    for (const auto& a : t.actions) out.emplace_back(a.name, where);
    if (t.guard && t.guard->kind == Condition::Kind::action) out.emplace_back(t.guard->action_name, "guard of " + where);
  }
}

}  // namespace detail

/// Structural checks against the metamodel. Violations are data; the result is
/// sorted so it does not depend on declaration order.
inline ValidationReport validate_machine(const StateMachine& sm, const std::set<std::string, std::less<>>& known_actions) {
  ValidationReport report;
  auto add = [&](ViolationClass c, std::string subject, std::string message) {
    report.violations.push_back({c, std::move(subject), std::move(message)});
  };

  const MachineIndex index(sm);

  std::map<std::string, int> seen;
  for (const State* s : index.all_states()) ++seen[s->name];
  for (const auto& [name, count] : seen)
    if (count > 1) add(ViolationClass::DuplicateState, name, "state name '" + name + "' is declared " + std::to_string(count) + " times");

  std::vector<std::string> starts;
  for (const auto& s : sm.states)
    if (s.has_tag(Tag::start)) starts.push_back(s.name);
  std::sort(starts.begin(), starts.end());
  if (starts.empty()) {
    add(ViolationClass::MissingStart, "", "no top-level state is tagged start");
  } else if (starts.size() > 1) {
    std::string names;
    for (const auto& n : starts) names += (names.empty() ? "" : ", ") + n;
    add(ViolationClass::MultipleStart, names, "several top-level states are tagged start: " + names);
  }
  // A start tag below the top level is never honoured.
  for (const State* s : index.all_states())
    if (s->has_tag(Tag::start) && index.depth(s->name) > 0)
      add(ViolationClass::MultipleStart, s->name, "nested state '" + s->name + "' is tagged start");

  const bool any_end = std::any_of(index.all_states().begin(), index.all_states().end(),
                                   [](const State* s) { return s->has_tag(Tag::end); });
  if (!any_end) add(ViolationClass::MissingEnd, "", "no state is tagged end");

  for (const State* s : index.all_states()) {
    if (s->is_composite()) {
      const bool ok = s->initial && std::any_of(s->substates.begin(), s->substates.end(),
                                                [&](const State& c) { return c.name == *s->initial; });
      if (!ok) add(ViolationClass::CompositeWithoutInitial, s->name, "composite state '" + s->name + "' lacks a valid initial substate");
    } else if (s->initial) {
      add(ViolationClass::CompositeWithoutInitial, s->name, "simple state '" + s->name + "' declares an initial substate");
    }
  }

  for (const auto& t : sm.transitions) {
    const std::string label = t.source + " --" + t.event + "--> " + t.target;
    if (!index.contains(t.source)) add(ViolationClass::DanglingTransition, label, "unknown source state '" + t.source + "'");
    if (!index.contains(t.target)) add(ViolationClass::DanglingTransition, label, "unknown target state '" + t.target + "'");
    if (const State* src = index.find(t.source); src != nullptr && src->has_tag(Tag::end))
      add(ViolationClass::EndHasOutgoing, label, "end state '" + t.source + "' has an outgoing transition");
    if (t.guard && t.guard->kind == Condition::Kind::expression) {
      try {
        (void)guard::parse_guard(t.guard->expression);
      } catch (const GuardSyntaxError& e) {
        add(ViolationClass::BadGuard, label, e.what());
      }
    }
  }

  std::vector<std::pair<std::string, std::string>> uses;
  detail::collect_actions(sm, uses);
  for (const auto& [name, where] : uses)
    if (known_actions.find(name) == known_actions.end())
      add(ViolationClass::UnknownAction, name + " @ " + where, "unknown action '" + name + "' used by " + where);

  // Reachability only makes sense once the start state is well defined.
  if (starts.size() == 1) {
    std::set<std::string> reached;
    std::vector<std::string> work;
    auto enter = [&](const std::string& name) {
      if (!index.contains(name)) return;
      std::vector<std::string> chain = index.parent_chain(name);
      chain.push_back(name);
      std::vector<std::string> down;
      try {
        down = index.initial_entry_path(name);
      } catch (const Error&) {
        down = {name};
      }
      chain.insert(chain.end(), down.begin(), down.end());
      for (auto& n : chain)
        if (reached.insert(n).second) work.push_back(n);
    };
    enter(starts.front());
    while (!work.empty()) {
      const std::string s = work.back();
      work.pop_back();
      for (const auto& t : sm.transitions)
        if (t.source == s) enter(t.target);
    }
    for (const auto& [name, count] : seen)
      if (reached.count(name) == 0) add(ViolationClass::UnreachableState, name, "state '" + name + "' is unreachable from the start state");
  }

  std::sort(report.violations.begin(), report.violations.end());
  return report;
}

}  // namespace smagent
