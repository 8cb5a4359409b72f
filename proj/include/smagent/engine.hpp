#pragma once

// Agent execution: hierarchical transition resolution, guard evaluation,
// exit/transition/entry ordering and the policy loop.

#include <cctype>
#include <exception>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "smagent/actions.hpp"
#include "smagent/belief.hpp"
#include "smagent/error.hpp"
#include "smagent/guard.hpp"
#include "smagent/machine.hpp"
#include "smagent/policy.hpp"
#include "smagent/provider.hpp"

namespace smagent {

enum class UnhandledEvent { error, ignore };

struct RunLimits {
  std::size_t max_transitions = 10;
  UnhandledEvent unhandled_event = UnhandledEvent::error;
};

enum class RunStatus { Completed, Waiting, BudgetExhausted, Failed };

constexpr std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::Completed: return "Completed";
    case RunStatus::Waiting: return "Waiting";
    case RunStatus::BudgetExhausted: return "BudgetExhausted";
    case RunStatus::Failed: return "Failed";
  }
  return "?";
}

struct EventInstance {
  std::string name;
  Json payload = Json::object();
};

struct RunResult {
  RunStatus status = RunStatus::Failed;
  std::string reason;              // set when Failed
  std::optional<Errc> error_code;  // set when Failed
  Json output;                     // output of the last successful action, null if none
  Belief belief;
  CallStats stats;                 // provider usage since the agent was created

  [[nodiscard]] std::size_t transitions() const { return belief.trajectory().size(); }
};

/// Coerces an action guard's output to a boolean.
inline bool guard_truth(const Json& v, const std::string& action) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_null()) return false;
  if (v.is_number()) return v.get<double>() != 0.0;
  if (v.is_array() || v.is_object()) return !v.empty();
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    s.erase(0, s.find_first_not_of(" \t\r\n"));
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (s.rfind("yes", 0) == 0 || s.rfind("true", 0) == 0) return true;
    if (s.rfind("no", 0) == 0 || s.rfind("false", 0) == 0) return false;
  }
  throw Error(Errc::GuardTypeError, "output " + compact(v) + " of guard action '" + action + "' is not a boolean");
}

class Agent {
 public:
  Agent(std::shared_ptr<const StateMachine> machine, std::shared_ptr<const ActionRegistry> registry, PolicyStack policy,
        Provider* provider, RunLimits limits = {}, Belief belief = {})
      : machine_(std::move(machine)),
        registry_(std::move(registry)),
        index_(*machine_),
        policy_(std::move(policy)),
        provider_(provider),
        limits_(limits),
        belief_(std::move(belief)) {
    if (limits_.max_transitions == 0) throw Error(Errc::InvalidArgument, "max_transitions must be at least 1");
    const ValidationReport report = validate_machine(*machine_, registry_->names());
    if (!report.ok()) {
      std::string msg;
      for (const auto& v : report.violations) {
        if (v.is_warning()) continue;
        if (!msg.empty()) msg += "; ";
        msg += std::string(to_string(v.cls)) + " " + v.subject + ": " + v.message;
      }
      throw Error(Errc::InvalidMachine, msg);
    }
    if (provider_ != nullptr) base_stats_ = provider_->stats();
  }

  [[nodiscard]] const StateMachine& machine() const { return *machine_; }
  [[nodiscard]] const MachineIndex& index() const { return index_; }
  [[nodiscard]] const Belief& belief() const { return belief_; }
  [[nodiscard]] Belief& belief() { return belief_; }
  [[nodiscard]] const RunLimits& limits() const { return limits_; }

  /// Runs until an end state, a wait for external input, the transition
  /// budget or a failure. A first call initializes the machine; later calls
  /// resume with the preserved belief.
  RunResult run(std::optional<EventInstance> event = std::nullopt) {
    try {
      if (!belief_.current_state()) initialize();
      if (event) dispatch_user(*event);
      loop();
      return result(status_, {}, std::nullopt);
    } catch (const Error& e) {
      return result(RunStatus::Failed, e.what(), e.code());
    } catch (const std::exception& e) {
      return result(RunStatus::Failed, e.what(), std::nullopt);
    }
  }

  /// Executes entry actions along the start state's initial path.
  void initialize() {
    const std::vector<std::string> path = index_.initial_entry_path(index_.start_state());
    belief_.set_current_state(path.back());
    for (const auto& name : path) {
      const State& s = index_.at(name);
      if (s.entry) execute_action(*s.entry, Json::object(), Phase::entry, 0);
    }
  }

  /// Candidates of the active state with guards evaluated against the
  /// belief; each guard runs at most once per step.
  std::vector<CandidateTransition> candidates() {
    const std::string& leaf = current();
    std::vector<CandidateTransition> out;
    for (const Transition* t : index_.enabled_transitions(leaf)) {
      CandidateTransition c;
      c.transition = t;
      c.guard_passed = guard_passes(*t);
      c.required_external_params = external_params(leaf, *t);
      out.push_back(std::move(c));
    }
    return out;
  }

  /// First transition in resolution order whose event matches and whose
  /// guard passes, or null.
  const Transition* resolve_transition(std::string_view event) {
    for (const Transition* t : index_.enabled_transitions(current()))
      if (t->event == event && guard_passes(*t)) return t;
    return nullptr;
  }

  /// Fires `t` from the active leaf.
  void dispatch(const Transition& t, const Json& payload) {
    const std::string leaf = current();
    const std::size_t step = belief_.trajectory().size() + 1;
    const auto plan = step_plan(leaf, t);
    belief_.record_transition({step, leaf, plan.leaf, t.event, payload.is_object() ? payload : Json::object()});
    guard_cache_.clear();
    for (const State* s : plan.exits)
      if (s->exit) execute_action(*s->exit, payload, Phase::exit, step);
    for (const auto& a : t.actions) execute_action(a, payload, Phase::transition, step);
    for (const State* s : plan.entries)
      if (s->entry) execute_action(*s->entry, payload, Phase::entry, step);
  }

  /// Builds inputs, runs the action, stores its output under the output key
  /// and logs it.
  Json execute_action(const ActionSpec& spec, const Json& external_args, Phase phase, std::size_t step) {
    const ActionDef* def = registry_->find(spec.name);
    if (def == nullptr) throw Error(Errc::UnknownAction, "no action named '" + spec.name + "'");
    Json inputs = build_inputs(spec, external_args, false);
    ActionRecord rec{step, spec.name, inputs, nullptr, phase, std::nullopt};
    try {
      rec.output = def->impl(ActionCall{spec, inputs, belief_, provider_});
    } catch (const std::exception& e) {
      rec.error = e.what();
      belief_.record_action(std::move(rec));
      throw Error(Errc::ActionFailure, spec.name + ": " + e.what());
    }
    belief_.kv_set(spec.effective_output_key(), rec.output);
    belief_.record_action(rec);
    return rec.output;
  }

  /// Evaluates a transition guard against the current belief; no caching.
  bool eval_guard(const Condition& guard) {
    if (guard.kind == Condition::Kind::expression) {
      const guard::GuardExpr expr = guard::parse_guard(guard.expression);
      return guard::evaluate(expr, [this](const guard::Path& p) { return belief_.resolve(p); });
    }
    const ActionDef* def = registry_->find(guard.action_name);
    if (def == nullptr) throw Error(Errc::UnknownGuardAction, "no action named '" + guard.action_name + "'");
    ActionSpec spec;
    spec.name = guard.action_name;
    const Json inputs = build_inputs(spec, Json::object(), true);
    Json out;
    try {
      out = def->impl(ActionCall{spec, inputs, belief_, provider_});
    } catch (...) {
      belief_.record_guard({belief_.trajectory().size() + 1, spec.name, false});
      throw;
    }
    const bool result = guard_truth(out, spec.name);
    belief_.record_guard({belief_.trajectory().size() + 1, spec.name, result});
    return result;
  }

 private:
  struct StepPlan {
    std::vector<const State*> exits;    // innermost first
    std::vector<const State*> entries;  // outermost first
    std::string leaf;                   // active leaf afterwards
  };

  const std::string& current() const { return *belief_.current_state(); }

  /// Chain of `name` and its ancestors, innermost first.
  std::vector<std::string> chain(const std::string& name) const {
    std::vector<std::string> c{name};
    for (auto& p : index_.parent_chain(name)) c.push_back(std::move(p));
    return c;
  }

  StepPlan step_plan(const std::string& leaf, const Transition& t) const {
    // Domain: deepest state that is a proper ancestor of both source and
    // target; null means the top level.
    const std::vector<std::string> src_up = index_.parent_chain(t.source);
    const std::vector<std::string> tgt_up = index_.parent_chain(t.target);
    const std::set<std::string> tgt_set(tgt_up.begin(), tgt_up.end());
    std::optional<std::string> domain;
    for (const auto& a : src_up) {
      if (tgt_set.count(a) != 0) {
        domain = a;
        break;
      }
    }
    StepPlan plan;
    for (const auto& s : chain(leaf)) {
      if (domain && s == *domain) break;
      plan.exits.push_back(&index_.at(s));
    }
    std::vector<std::string> down;
    for (const auto& s : chain(t.target)) {
      if (domain && s == *domain) break;
      down.push_back(s);
    }
    for (auto it = down.rbegin(); it != down.rend(); ++it) plan.entries.push_back(&index_.at(*it));
    const std::vector<std::string> initial = index_.initial_entry_path(t.target);
    for (std::size_t i = 1; i < initial.size(); ++i) plan.entries.push_back(&index_.at(initial[i]));
    plan.leaf = initial.back();
    return plan;
  }

  std::vector<ParameterSpec> external_params(const std::string& leaf, const Transition& t) const {
    const StepPlan plan = step_plan(leaf, t);
    std::vector<ParameterSpec> out;
    std::set<std::string> seen;
    auto add = [&](const ActionSpec& spec) {
      for (auto& p : registry_->effective_params(spec))
        if (p.source == ParamSource::external && seen.insert(p.name).second) out.push_back(std::move(p));
    };
    for (const State* s : plan.exits)
      if (s->exit) add(*s->exit);
    for (const auto& a : t.actions) add(a);
    for (const State* s : plan.entries)
      if (s->entry) add(*s->entry);
    return out;
  }

  Json build_inputs(const ActionSpec& spec, const Json& external_args, bool internal_only) const {
    Json inputs = Json::object();
    for (const auto& p : registry_->effective_params(spec)) {
      if (p.source == ParamSource::internal) {
        auto v = belief_.resolve(p.key());
        if (!v) throw Error(Errc::MissingInternalValue, "action '" + spec.name + "' needs '" + p.key() + "' in the belief");
        inputs[p.name] = std::move(*v);
        continue;
      }
      if (internal_only)
        throw Error(Errc::MissingExternalArgument, "guard action '" + spec.name + "' declares external parameter '" + p.name + "'");
      auto it = external_args.is_object() ? external_args.find(p.name) : external_args.end();
      if (!external_args.is_object() || it == external_args.end())
        throw Error(Errc::MissingExternalArgument, "action '" + spec.name + "' needs argument '" + p.name + "'");
      auto coerced = coerce(*it, p.datatype);
      if (!coerced)
        throw Error(Errc::BadArgumentType, "argument '" + p.name + "' of '" + spec.name + "' must be a " +
                                               std::string(to_string(p.datatype)));
      inputs[p.name] = std::move(*coerced);
    }
    return inputs;
  }

  bool guard_passes(const Transition& t) {
    if (!t.guard) return true;
    auto it = guard_cache_.find(&t);
    if (it != guard_cache_.end()) return it->second;
    const bool v = eval_guard(*t.guard);
    guard_cache_.emplace(&t, v);
    return v;
  }

  void dispatch_user(const EventInstance& ev) {
    guard_cache_.clear();
    const Transition* t = resolve_transition(ev.name);
    if (t == nullptr) {
      if (limits_.unhandled_event == UnhandledEvent::ignore) return;
      throw Error(Errc::UnhandledEvent, "state '" + current() + "' has no enabled transition for '" + ev.name + "'");
    }
    dispatch(*t, ev.payload);
  }

  void loop() {
    while (true) {
      guard_cache_.clear();
      if (index_.is_end(current())) {
        status_ = RunStatus::Completed;
        return;
      }
      const std::vector<CandidateTransition> cands = candidates();
      if (selectable(cands).empty()) {
        status_ = RunStatus::Waiting;
        return;
      }
      if (belief_.trajectory().size() >= limits_.max_transitions) {
        status_ = RunStatus::BudgetExhausted;
        return;
      }
      const std::size_t step = belief_.trajectory().size() + 1;
      std::vector<std::string> active = chain(current());
      std::size_t attempts = 0;
      Decision d;
      try {
        d = decide(policy_, DecisionContext{index_.at(current()), active, cands, belief_, provider_, &index_}, attempts);
      } catch (...) {
        if (attempts > 0) belief_.record_policy({step, "llm", "", attempts});
        throw;
      }
      belief_.record_policy({step, d.stage, d.selection.event, attempts});
      const Transition* t = resolve_transition(d.selection.event);
      if (t == nullptr) throw Error(Errc::UnhandledEvent, "selected event '" + d.selection.event + "' did not resolve");
      dispatch(*t, d.selection.arguments);
    }
  }

  RunResult result(RunStatus status, std::string reason, std::optional<Errc> code) const {
    RunResult r;
    r.status = status;
    r.reason = std::move(reason);
    r.error_code = code;
    const auto& log = belief_.execution_log();
    for (auto it = log.rbegin(); it != log.rend(); ++it) {
      if (!it->error) {
        r.output = it->output;
        break;
      }
    }
    r.belief = belief_;
    if (provider_ != nullptr) {
      const CallStats now = provider_->stats();
      r.stats = {now.calls - base_stats_.calls, now.prompt_bytes - base_stats_.prompt_bytes,
                 now.reply_bytes - base_stats_.reply_bytes};
    }
    return r;
  }

  std::shared_ptr<const StateMachine> machine_;
  std::shared_ptr<const ActionRegistry> registry_;
  MachineIndex index_;
  PolicyStack policy_;
  Provider* provider_ = nullptr;
  RunLimits limits_;
  Belief belief_;
  CallStats base_stats_;
  RunStatus status_ = RunStatus::Failed;
  std::map<const Transition*, bool> guard_cache_;
};

/// Exit code of the command-line runner for a status.
constexpr int exit_code(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::Completed: return 0;
    case RunStatus::Waiting: return 2;
    case RunStatus::BudgetExhausted: return 3;
    case RunStatus::Failed: return 1;
  }
  return 1;
}

}  // namespace smagent
