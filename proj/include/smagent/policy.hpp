#pragma once

// Event selection: fast-forward, rule-based and LLM-based stages combined in
// an ordered stack.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "smagent/actions.hpp"
#include "smagent/belief.hpp"
#include "smagent/error.hpp"
#include "smagent/guard.hpp"
#include "smagent/json_text.hpp"
#include "smagent/machine.hpp"
#include "smagent/machine_json.hpp"
#include "smagent/provider.hpp"

namespace smagent {

struct CandidateTransition {
  const Transition* transition = nullptr;
  bool guard_passed = false;
  /// External parameters of every action the transition would fire.
  std::vector<ParameterSpec> required_external_params;

  [[nodiscard]] const std::string& event() const { return transition->event; }
  [[nodiscard]] bool is_internal() const { return transition->trigger == Trigger::internal; }
};

struct EventSelection {
  std::string event;
  Json arguments = Json::object();

  bool operator==(const EventSelection&) const = default;
};

/// The candidates a policy may pick: for each event, the first guard-passed
/// transition in resolution order, kept only if it is internally triggered.
inline std::vector<const CandidateTransition*> selectable(const std::vector<CandidateTransition>& candidates) {
  std::vector<const CandidateTransition*> out;
  std::set<std::string, std::less<>> seen;
  for (const auto& c : candidates) {
    if (!c.guard_passed || !seen.insert(c.event()).second) continue;
    if (c.is_internal()) out.push_back(&c);
  }
  return out;
}

inline const CandidateTransition* find_selectable(const std::vector<const CandidateTransition*>& sel,
                                                  std::string_view event) {
  for (const auto* c : sel)
    if (c->event() == event) return c;
  return nullptr;
}

/// Checks and coerces arguments against the candidate's external parameters.
/// Extra arguments are kept.
inline Json check_arguments(const CandidateTransition& c, const Json& arguments) {
  Json out = arguments.is_object() ? arguments : Json::object();
  for (const auto& p : c.required_external_params) {
    auto it = out.find(p.name);
    if (it == out.end()) throw Error(Errc::MissingArgument, "event '" + c.event() + "' needs argument '" + p.name + "'");
    auto coerced = coerce(*it, p.datatype);
    if (!coerced)
      throw Error(Errc::BadArgumentType, "argument '" + p.name + "' must be a " + std::string(to_string(p.datatype)) +
                                             ", got " + compact(*it));
    *it = std::move(*coerced);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fast-forward

inline std::optional<EventSelection> fast_forward(const std::vector<CandidateTransition>& candidates) {
  std::size_t internal_passed = 0;
  const CandidateTransition* only = nullptr;
  for (const auto& c : candidates) {
    if (c.guard_passed && c.is_internal()) {
      ++internal_passed;
      only = &c;
    }
  }
  if (internal_passed != 1 || !only->required_external_params.empty()) return std::nullopt;
  return EventSelection{only->event(), Json::object()};
}

// ---------------------------------------------------------------------------
// Rules

/// A rule argument is a literal JSON value or a belief path reference,
/// written {"$ref": "kv.path"} in rule files.
struct RuleArgument {
  std::optional<std::string> ref;
  Json literal;

  static RuleArgument value(Json v) { return {std::nullopt, std::move(v)}; }
  static RuleArgument reference(std::string path) { return {std::move(path), nullptr}; }
  bool operator==(const RuleArgument&) const = default;
};

struct Rule {
  std::optional<std::string> when_state;
  std::optional<guard::GuardExpr> when_guard;
  std::string emit_event;
  std::map<std::string, RuleArgument> emit_arguments;
};

inline std::vector<Rule> parse_rules(std::string_view text) {
  using json_detail::Reader;
  const Json doc = json_detail::parse_json_text(text);
  Reader::array_at(doc, "");
  std::vector<Rule> rules;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string ptr = "/" + std::to_string(i);
    const Json& r = doc[i];
    Reader::expect_object(r, ptr);
    Reader::check_keys(r, ptr, {"when_state", "when_guard", "emit_event", "emit_arguments"});
    Rule rule;
    rule.emit_event = Reader::identifier_at(Reader::required(r, ptr, "emit_event"), ptr + "/emit_event");
    if (auto it = r.find("when_state"); it != r.end()) rule.when_state = Reader::identifier_at(*it, ptr + "/when_state");
    if (auto it = r.find("when_guard"); it != r.end())
      rule.when_guard = guard::parse_guard(Reader::string_at(*it, ptr + "/when_guard"));
    if (!rule.when_state && !rule.when_guard) throw SchemaError(ptr, "a rule needs when_state or when_guard");
    if (auto it = r.find("emit_arguments"); it != r.end()) {
      Reader::expect_object(*it, ptr + "/emit_arguments");
      for (const auto& [name, v] : it->items()) {
        if (v.is_object() && v.size() == 1 && v.contains("$ref")) {
          const std::string at = ptr + "/emit_arguments/" + json_detail::escape_pointer(name) + "/$ref";
          rule.emit_arguments[name] = RuleArgument::reference(Reader::string_at(v["$ref"], at));
        } else {
          rule.emit_arguments[name] = RuleArgument::value(v);
        }
      }
    }
    rules.push_back(std::move(rule));
  }
  return rules;
}

inline std::vector<Rule> load_rules_file(const std::string& path) { return parse_rules(read_text_file(path)); }

/// `active_states` is the active leaf followed by its ancestors; when_state
/// matches any of them.
inline std::optional<EventSelection> rule_decide(const std::vector<Rule>& rules,
                                                 const std::vector<std::string>& active_states,
                                                 const std::vector<CandidateTransition>& candidates,
                                                 const Belief& belief) {
  const auto sel = selectable(candidates);
  const guard::Lookup lookup = [&](const guard::Path& p) { return belief.resolve(p); };
  for (const auto& rule : rules) {
    if (rule.when_state &&
        std::find(active_states.begin(), active_states.end(), *rule.when_state) == active_states.end())
      continue;
    if (rule.when_guard && !guard::evaluate(*rule.when_guard, lookup)) continue;
    const CandidateTransition* c = find_selectable(sel, rule.emit_event);
    if (c == nullptr) continue;
    Json args = Json::object();
    for (const auto& [name, arg] : rule.emit_arguments) {
      if (!arg.ref) {
        args[name] = arg.literal;
        continue;
      }
      auto v = belief.resolve(*arg.ref);
      if (!v) throw Error(Errc::RuleArgumentUnresolvable, "rule for '" + rule.emit_event + "' references absent '" + *arg.ref + "'");
      args[name] = std::move(*v);
    }
    const bool covered = std::all_of(c->required_external_params.begin(), c->required_external_params.end(),
                                     [&](const ParameterSpec& p) { return args.contains(p.name); });
    if (!covered) continue;
    return EventSelection{rule.emit_event, check_arguments(*c, args)};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// LLM policy

inline constexpr std::string_view kDefaultOutputInstruction =
    "Choose exactly one of the available transitions. Reply with a JSON object of the form "
    "{\"event\": \"<event name>\", \"arguments\": {\"<parameter name>\": <value>}} and supply every parameter "
    "listed for the chosen transition.";

struct LlmPolicyConfig {
  std::string task_description;
  std::string output_instruction{kDefaultOutputInstruction};
  std::size_t history_token_budget = 3000;
  std::size_t max_parse_retries = 1;
};

/// Five sections in fixed order: task, execution history, current state,
/// available transitions, output instruction.
inline std::string build_policy_prompt(const LlmPolicyConfig& cfg, const State& state,
                                       const std::vector<CandidateTransition>& candidates, const Belief& belief,
                                       const MachineIndex* index = nullptr) {
  if (cfg.history_token_budget == 0) throw Error(Errc::InvalidArgument, "history budget must be at least 1");
  const auto sel = selectable(candidates);
  if (sel.empty()) throw Error(Errc::NoCandidates, "state '" + state.name + "' has no selectable transition");

  std::string p;
  p += "## Task\n" + cfg.task_description + "\n\n";
  const std::string history = belief.render_history(cfg.history_token_budget);
  p += "## Execution history\n" + (history.empty() ? std::string("(none)") : history) + "\n\n";
  p += "## Current state\n" + state.name;
  if (!state.description.empty()) p += ": " + state.description;
  p += "\n\n## Available transitions\n";
  for (const auto* c : sel) {
    p += "- " + c->event() + ": goes to " + c->transition->target;
    if (index != nullptr) {
      if (const State* t = index->find(c->transition->target); t != nullptr && !t->description.empty())
        p += " (" + t->description + ")";
    }
    p += ". Parameters: ";
    if (c->required_external_params.empty()) p += "none";
    for (std::size_t i = 0; i < c->required_external_params.size(); ++i) {
      const auto& param = c->required_external_params[i];
      if (i != 0) p += "; ";
      p += param.name + " (" + std::string(to_string(param.datatype)) + ")";
      if (!param.description.empty()) p += ": " + param.description;
    }
    p += "\n";
  }
  p += "\n## Output instruction\n" + cfg.output_instruction + "\n";
  return p;
}

inline EventSelection parse_policy_response(std::string_view text, const std::vector<CandidateTransition>& candidates) {
  const auto obj = first_json(text, '{');
  if (!obj) throw Error(Errc::Unparseable, "reply contains no JSON object");
  auto ev = obj->find("event");
  if (ev == obj->end() || !ev->is_string()) throw Error(Errc::Unparseable, "reply object lacks a string \"event\"");
  const std::string event = ev->get<std::string>();
  const auto sel = selectable(candidates);
  const CandidateTransition* c = find_selectable(sel, event);
  if (c == nullptr) throw Error(Errc::UnknownEvent, "'" + event + "' is not an available transition");
  Json args = Json::object();
  if (auto a = obj->find("arguments"); a != obj->end()) {
    if (!a->is_object() && !a->is_null()) throw Error(Errc::Unparseable, "\"arguments\" must be an object");
    if (a->is_object()) args = *a;
  }
  return {event, check_arguments(*c, args)};
}

/// Prompts until a reply parses, at most 1 + max_parse_retries times. Each
/// prompt sent increments `attempts`.
inline EventSelection llm_decide(const LlmPolicyConfig& cfg, Provider& provider, const State& state,
                                 const std::vector<CandidateTransition>& candidates, const Belief& belief,
                                 std::size_t& attempts, const MachineIndex* index = nullptr) {
  const std::string base = build_policy_prompt(cfg, state, candidates, belief, index);
  std::string prompt = base;
  std::string last_error;
  for (std::size_t i = 0; i <= cfg.max_parse_retries; ++i) {
    CompletionRequest req;
    req.prompt = prompt;
    ++attempts;
    const std::string reply = provider.complete(req);
    try {
      return parse_policy_response(reply, candidates);
    } catch (const Error& e) {
      if (e.code() != Errc::Unparseable && e.code() != Errc::UnknownEvent && e.code() != Errc::MissingArgument &&
          e.code() != Errc::BadArgumentType)
        throw;
      last_error = e.what();
    }
    prompt = base + "\nYour previous reply could not be used: " + last_error + "\nReply again following the output instruction.\n";
  }
  throw Error(Errc::PolicyFailure, "no usable reply after " + std::to_string(attempts) + " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Stack

struct PolicyStage {
  enum class Kind { rules, llm };

  Kind kind = Kind::rules;
  std::vector<Rule> rules;
  LlmPolicyConfig llm;

  static PolicyStage rule_stage(std::vector<Rule> r) { return {Kind::rules, std::move(r), {}}; }
  static PolicyStage llm_stage(LlmPolicyConfig cfg) { return {Kind::llm, {}, std::move(cfg)}; }
};

using PolicyStack = std::vector<PolicyStage>;

struct Decision {
  EventSelection selection;
  std::string stage;  // "fast_forward", "rules" or "llm"
};

struct DecisionContext {
  const State& state;
  std::vector<std::string> active_states;
  const std::vector<CandidateTransition>& candidates;
  const Belief& belief;
  Provider* provider = nullptr;
  const MachineIndex* index = nullptr;
};

/// Fast-forward, then each stage in order; the first selection wins.
/// `attempts` accumulates prompts sent, also when an exception escapes.
inline Decision decide(const PolicyStack& stack, const DecisionContext& ctx, std::size_t& attempts) {
  if (auto ff = fast_forward(ctx.candidates)) return {std::move(*ff), "fast_forward"};
  for (const auto& stage : stack) {
    if (stage.kind == PolicyStage::Kind::rules) {
      if (auto s = rule_decide(stage.rules, ctx.active_states, ctx.candidates, ctx.belief)) return {std::move(*s), "rules"};
      continue;
    }
    if (ctx.provider == nullptr) throw Error(Errc::ProviderError, "LLM policy stage needs a provider");
    if (selectable(ctx.candidates).empty()) continue;
    return {llm_decide(stage.llm, *ctx.provider, ctx.state, ctx.candidates, ctx.belief, attempts, ctx.index), "llm"};
  }
  throw Error(Errc::PolicyExhausted, "no policy stage selected an event in state '" + ctx.state.name + "'");
}

}  // namespace smagent
