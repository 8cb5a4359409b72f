#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "smagent/error.hpp"
#include "smagent/guard.hpp"
#include "smagent/machine_json.hpp"

namespace smagent {

enum class Role { user, system };
enum class Phase { exit, transition, entry };

constexpr std::string_view to_string(Role r) noexcept { return r == Role::user ? "user" : "system"; }
constexpr std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::exit: return "exit";
    case Phase::transition: return "transition";
    case Phase::entry: return "entry";
  }
  return "?";
}

struct Message {
  Role role = Role::user;
  std::string text;
};

struct TransitionRecord {
  std::size_t step = 0;
  std::string source;
  std::string target;
  std::string event;
  Json event_payload = Json::object();
};

struct ActionRecord {
  std::size_t step = 0;  // 0 for actions run before the first transition
  std::string action;
  Json inputs = Json::object();
  Json output;
  Phase phase = Phase::entry;
  std::optional<std::string> error;  // set when the implementation threw
};

/// How the event of a step was chosen. `attempts` counts prompts sent by an
/// LLM stage; rule and fast-forward stages never prompt.
struct PolicyRecord {
  std::size_t step = 0;
  std::string stage;
  std::string event;
  std::size_t attempts = 0;
};

/// One evaluation of an action guard.
struct GuardRecord {
  std::size_t step = 0;
  std::string action;
  bool result = false;
};

/// Estimated token count of a text: one token per four bytes, rounded up.
inline std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

inline constexpr std::string_view kTruncationMarker = "...";

inline std::string compact(const Json& v) { return v.dump(-1, ' ', false, Json::error_handler_t::replace); }

/// The agent's task memory: task context, trajectory store, execution log and
/// key-value store.
class Belief {
 public:
  Belief() = default;
  explicit Belief(std::vector<Message> task_context) : task_context_(std::move(task_context)) {}

  [[nodiscard]] const std::vector<Message>& task_context() const { return task_context_; }
  [[nodiscard]] const std::vector<TransitionRecord>& trajectory() const { return trajectory_; }
  [[nodiscard]] const std::vector<ActionRecord>& execution_log() const { return execution_log_; }
  [[nodiscard]] const std::vector<PolicyRecord>& policy_log() const { return policy_log_; }
  [[nodiscard]] const std::vector<GuardRecord>& guard_log() const { return guard_log_; }
  [[nodiscard]] const Json& kv() const { return kv_; }
  [[nodiscard]] const std::optional<std::string>& current_state() const { return current_state_; }

  void add_message(Role role, std::string text) { task_context_.push_back({role, std::move(text)}); }

  void set_current_state(std::string name) { current_state_ = std::move(name); }

  void record_transition(TransitionRecord rec) {
    if (rec.step != trajectory_.size() + 1)
      throw Error(Errc::StepOutOfOrder, "expected step " + std::to_string(trajectory_.size() + 1) + ", got " +
                                            std::to_string(rec.step));
    current_state_ = rec.target;
    trajectory_.push_back(std::move(rec));
  }

  void record_action(ActionRecord rec) {
    if (rec.step > trajectory_.size())
      throw Error(Errc::StepOutOfOrder, "action references step " + std::to_string(rec.step) + " but only " +
                                            std::to_string(trajectory_.size()) + " transitions are recorded");
    execution_log_.push_back(std::move(rec));
  }

  void record_policy(PolicyRecord rec) { policy_log_.push_back(std::move(rec)); }
  void record_guard(GuardRecord rec) { guard_log_.push_back(std::move(rec)); }

  void kv_set(const std::string& key, Json value) {
    if (!json_detail::is_identifier(key)) throw Error(Errc::InvalidArgument, "'" + key + "' is not an identifier");
    kv_[key] = std::move(value);
  }

  /// Resolves a dotted path into the store; numeric segments index arrays.
  [[nodiscard]] std::optional<Json> kv_get(std::string_view dotted) const { return guard::lookup_in(kv_, split(dotted)); }

  /// Path lookup used by guards and rules. A leading `kv.` segment names the
  /// store itself unless a key literally called "kv" exists.
  [[nodiscard]] std::optional<Json> resolve(const guard::Path& path) const {
    if (path.segments.size() > 1 && path.segments.front() == "kv" && !kv_.contains("kv")) {
      guard::Path rest;
      rest.segments.assign(path.segments.begin() + 1, path.segments.end());
      return guard::lookup_in(kv_, rest);
    }
    return guard::lookup_in(kv_, path);
  }
  [[nodiscard]] std::optional<Json> resolve(std::string_view dotted) const { return resolve(split(dotted)); }

  /// Trajectory and action records rendered one line each, in step order:
  /// pre-run actions, then for every step its transition followed by the
  /// actions it fired.
  [[nodiscard]] std::vector<std::string> history_entries() const {
    std::map<std::size_t, std::vector<const ActionRecord*>> by_step;
    for (const auto& a : execution_log_) by_step[a.step].push_back(&a);
    std::vector<std::string> out;
    auto actions_of = [&](std::size_t step) {
      auto it = by_step.find(step);
      if (it == by_step.end()) return;
      for (const ActionRecord* a : it->second) out.push_back(render(*a));
    };
    actions_of(0);
    for (const auto& t : trajectory_) {
      out.push_back(render(t));
      actions_of(t.step);
    }
    return out;
  }

  /// The longest suffix of history_entries() whose estimate fits the budget.
  /// When even the newest entry does not fit, its head is kept and the
  /// marker appended.
  [[nodiscard]] std::string render_history(std::size_t token_budget) const {
    if (token_budget == 0) throw Error(Errc::InvalidArgument, "token budget must be at least 1");
    const std::vector<std::string> entries = history_entries();
    if (entries.empty()) return {};
    std::size_t bytes = 0;
    std::size_t first = entries.size();
    while (first > 0) {
      const std::size_t candidate = bytes + entries[first - 1].size() + (first == entries.size() ? 0 : 1);
      if ((candidate + 3) / 4 > token_budget) break;
      bytes = candidate;
      --first;
    }
    if (first == entries.size()) {
      const std::size_t room = token_budget * 4 > kTruncationMarker.size() ? token_budget * 4 - kTruncationMarker.size() : 0;
      return truncate_utf8(entries.back(), room) + std::string(kTruncationMarker);
    }
    std::string out;
    for (std::size_t i = first; i < entries.size(); ++i) {
      if (i != first) out += '\n';
      out += entries[i];
    }
    return out;
  }

  /// Trace document: {task_context, trajectory, execution_log, kv,
  /// current_state, policy_log, guard_log}.
  [[nodiscard]] Json to_json() const {
    Json j;
    j["task_context"] = Json::array();
    for (const auto& m : task_context_) j["task_context"].push_back({{"role", to_string(m.role)}, {"text", m.text}});
    j["trajectory"] = Json::array();
    for (const auto& t : trajectory_)
      j["trajectory"].push_back({{"step", t.step}, {"source", t.source}, {"target", t.target}, {"event", t.event},
                                 {"event_payload", t.event_payload}});
    j["execution_log"] = Json::array();
    for (const auto& a : execution_log_) {
      Json rec = {{"step", a.step}, {"action", a.action}, {"inputs", a.inputs}, {"output", a.output},
                  {"phase", to_string(a.phase)}};
      if (a.error) rec["error"] = *a.error;
      j["execution_log"].push_back(std::move(rec));
    }
    j["kv"] = kv_;
    j["current_state"] = current_state_ ? Json(*current_state_) : Json(nullptr);
    j["policy_log"] = Json::array();
    for (const auto& p : policy_log_)
      j["policy_log"].push_back({{"step", p.step}, {"stage", p.stage}, {"event", p.event}, {"attempts", p.attempts}});
    j["guard_log"] = Json::array();
    for (const auto& g : guard_log_)
      j["guard_log"].push_back({{"step", g.step}, {"action", g.action}, {"result", g.result}});
    return j;
  }

 private:
  static guard::Path split(std::string_view dotted) {
    guard::Path p;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = dotted.find('.', start);
      p.segments.emplace_back(dotted.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
      if (dot == std::string_view::npos) break;
      start = dot + 1;
    }
    return p;
  }

  static std::string truncate_utf8(const std::string& s, std::size_t max_bytes) {
    if (s.size() <= max_bytes) return s;
    std::size_t cut = max_bytes;
    // Back up to a code point boundary.
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    return s.substr(0, cut);
  }

  static std::string render(const TransitionRecord& t) {
    std::string line = "step " + std::to_string(t.step) + ": " + t.source + " -> " + t.target + " on " + t.event;
    if (!t.event_payload.is_null() && !t.event_payload.empty()) line += " with " + compact(t.event_payload);
    return line;
  }

  static std::string render(const ActionRecord& a) {
    return "step " + std::to_string(a.step) + ": " + std::string(to_string(a.phase)) + " action " + a.action + "(" +
           compact(a.inputs) + ") => " + (a.error ? "error: " + *a.error : compact(a.output));
  }

  std::vector<Message> task_context_;
  std::vector<TransitionRecord> trajectory_;
  std::vector<ActionRecord> execution_log_;
  std::vector<PolicyRecord> policy_log_;
  std::vector<GuardRecord> guard_log_;
  Json kv_ = Json::object();
  std::optional<std::string> current_state_;
};

inline Belief new_belief(std::vector<Message> task_context = {}) { return Belief(std::move(task_context)); }

}  // namespace smagent
