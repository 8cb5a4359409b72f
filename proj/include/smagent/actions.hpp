#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "smagent/belief.hpp"
#include "smagent/error.hpp"
#include "smagent/machine.hpp"
#include "smagent/provider.hpp"

namespace smagent {

/// What an action implementation sees when it runs. `inputs` maps every
/// declared parameter name to its resolved value.
struct ActionCall {
  const ActionSpec& spec;
  const Json& inputs;
  const Belief& belief;
  Provider* provider = nullptr;
};

using ActionFn = std::function<Json(const ActionCall&)>;

struct ActionDef {
  std::string name;
  std::vector<ParameterSpec> params;
  DataType output_type = DataType::json;
  bool uses_provider = false;  // each invocation issues exactly one completion
  ActionFn impl;
};

class ActionRegistry {
 public:
  void register_action(ActionDef def) {
    if (def.name.empty() || !def.impl) throw Error(Errc::InvalidArgument, "action needs a name and an implementation");
    const std::string name = def.name;
    if (!actions_.emplace(name, std::move(def)).second)
      throw Error(Errc::DuplicateAction, "action '" + name + "' is already registered");
  }

  [[nodiscard]] const ActionDef* find(std::string_view name) const {
    auto it = actions_.find(name);
    return it == actions_.end() ? nullptr : &it->second;
  }

  [[nodiscard]] std::set<std::string, std::less<>> names() const {
    std::set<std::string, std::less<>> out;
    for (const auto& [name, def] : actions_) out.insert(name);
    return out;
  }

  [[nodiscard]] std::size_t size() const { return actions_.size(); }

  /// Registry-declared parameters with the machine's per-name overrides and
  /// additions applied.
  [[nodiscard]] std::vector<ParameterSpec> effective_params(const ActionSpec& spec) const {
    std::vector<ParameterSpec> out;
    if (const ActionDef* def = find(spec.name)) out = def->params;
    for (const auto& p : spec.params) {
      bool replaced = false;
      for (auto& existing : out) {
        if (existing.name == p.name) {
          existing = p;
          replaced = true;
        }
      }
      if (!replaced) out.push_back(p);
    }
    return out;
  }

 private:
  std::map<std::string, ActionDef, std::less<>> actions_;
};

inline ActionRegistry& register_action(ActionRegistry& registry, std::string name, std::vector<ParameterSpec> params,
                                       ActionFn impl, bool uses_provider = false) {
  registry.register_action({std::move(name), std::move(params), DataType::json, uses_provider, std::move(impl)});
  return registry;
}

inline ParameterSpec external_param(std::string name, DataType type, std::string description) {
  return {std::move(name), ParamSource::external, type, std::move(description), std::nullopt};
}

inline ParameterSpec internal_param(std::string name, DataType type, std::string description,
                                    std::optional<std::string> source_key = std::nullopt) {
  return {std::move(name), ParamSource::internal, type, std::move(description), std::move(source_key)};
}

/// Checks a value against a declared datatype, coercing numeric and boolean
/// strings. Returns nullopt when the value does not fit.
inline std::optional<Json> coerce(const Json& value, DataType type) {
  switch (type) {
    case DataType::json: return value;
    case DataType::string:
      if (value.is_string()) return value;
      return std::nullopt;
    case DataType::number:
      if (value.is_number()) return value;
      if (value.is_string()) {
        Json parsed = Json::parse(value.get<std::string>(), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_number()) return parsed;
      }
      return std::nullopt;
    case DataType::boolean:
      if (value.is_boolean()) return value;
      if (value.is_string()) {
        const std::string& s = value.get_ref<const std::string&>();
        if (s == "true") return Json(true);
        if (s == "false") return Json(false);
      }
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace smagent
