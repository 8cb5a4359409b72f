#pragma once

#include <atomic>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "smagent/error.hpp"
#include "smagent/machine_json.hpp"

namespace smagent {

inline constexpr double kDefaultTemperature = 0.01;

struct CompletionRequest {
  std::optional<std::string> system;
  std::string prompt;
  double temperature = kDefaultTemperature;
  std::size_t max_output_bytes = 16384;
};

struct CallStats {
  std::size_t calls = 0;
  std::size_t prompt_bytes = 0;
  std::size_t reply_bytes = 0;

  bool operator==(const CallStats&) const = default;
};

/// A completion backend. `complete` counts every invocation, whatever its
/// outcome, before delegating to the backend.
class Provider {
 public:
  virtual ~Provider() = default;

  std::string complete(const CompletionRequest& request) {
    if (!(request.temperature >= 0.0 && request.temperature <= 2.0))
      throw Error(Errc::InvalidArgument, "temperature must lie in [0, 2]");
    if (request.max_output_bytes == 0) throw Error(Errc::InvalidArgument, "max_output_bytes must be positive");
    calls_.fetch_add(1, std::memory_order_relaxed);
    prompt_bytes_.fetch_add(request.prompt.size() + (request.system ? request.system->size() : 0),
                            std::memory_order_relaxed);
    std::string reply = do_complete(request);
    if (reply.size() > request.max_output_bytes) reply.resize(request.max_output_bytes);
    reply_bytes_.fetch_add(reply.size(), std::memory_order_relaxed);
    return reply;
  }

  [[nodiscard]] CallStats stats() const {
    return {calls_.load(std::memory_order_relaxed), prompt_bytes_.load(std::memory_order_relaxed),
            reply_bytes_.load(std::memory_order_relaxed)};
  }

 protected:
  virtual std::string do_complete(const CompletionRequest& request) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> prompt_bytes_{0};
  std::atomic<std::size_t> reply_bytes_{0};
};

inline CallStats snapshot_stats(const Provider& p) { return p.stats(); }

struct ScriptStep {
  std::optional<std::string> match;
  std::string reply;
};

struct Script {
  std::vector<ScriptStep> steps;
  bool strict = false;
};

/// Replays canned replies in order. In strict mode a step with `match` only
/// accepts prompts containing that substring.
class ScriptedProvider : public Provider {
 public:
  explicit ScriptedProvider(Script script) : script_(std::move(script)) {}
  explicit ScriptedProvider(std::vector<std::string> replies, bool strict = false) {
    script_.strict = strict;
    for (auto& r : replies) script_.steps.push_back({std::nullopt, std::move(r)});
  }

  [[nodiscard]] std::size_t remaining() const { return script_.steps.size() - cursor_; }
  [[nodiscard]] const std::vector<std::string>& prompts() const { return prompts_; }

 protected:
  std::string do_complete(const CompletionRequest& request) override {
    prompts_.push_back(request.prompt);
    if (cursor_ >= script_.steps.size())
      throw Error(Errc::ScriptExhausted, "no scripted reply left after " + std::to_string(cursor_) + " steps");
    const ScriptStep& step = script_.steps[cursor_];
    if (script_.strict && step.match && request.prompt.find(*step.match) == std::string::npos)
      throw Error(Errc::ScriptMismatch, "step " + std::to_string(cursor_ + 1) + " expects a prompt containing '" +
                                            *step.match + "'");
    ++cursor_;
    return step.reply;
  }

 private:
  Script script_;
  std::size_t cursor_ = 0;
  std::vector<std::string> prompts_;
};

/// Script documents are either an array of steps or {"strict": bool,
/// "steps": [...]}; a step is a reply string or {"match"?, "reply"}.
inline Script parse_script(std::string_view text) {
  const Json doc = json_detail::parse_json_text(text);
  Script script;
  const Json* steps = &doc;
  if (doc.is_object()) {
    json_detail::Reader::check_keys(doc, "", {"strict", "steps"});
    if (auto it = doc.find("strict"); it != doc.end()) {
      if (!it->is_boolean()) throw SchemaError("/strict", "expected a boolean");
      script.strict = it->get<bool>();
    }
    steps = &json_detail::Reader::required(doc, "", "steps");
  }
  if (!steps->is_array()) throw SchemaError(doc.is_object() ? "/steps" : "", "expected an array of steps");
  for (std::size_t i = 0; i < steps->size(); ++i) {
    const Json& s = (*steps)[i];
    const std::string ptr = (doc.is_object() ? "/steps/" : "/") + std::to_string(i);
    if (s.is_string()) {
      script.steps.push_back({std::nullopt, s.get<std::string>()});
      continue;
    }
    json_detail::Reader::expect_object(s, ptr);
    json_detail::Reader::check_keys(s, ptr, {"match", "reply"});
    ScriptStep step;
    step.reply = json_detail::Reader::string_at(json_detail::Reader::required(s, ptr, "reply"), ptr + "/reply");
    if (auto it = s.find("match"); it != s.end()) step.match = json_detail::Reader::string_at(*it, ptr + "/match");
    script.steps.push_back(std::move(step));
  }
  return script;
}

}  // namespace smagent
