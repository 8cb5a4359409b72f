#pragma once

// The built-in action library: scene-graph operations for question answering
// plus `note`, which records a marker string.

#include <string>
#include <vector>

#include "json.hpp"
#include "smagent/actions.hpp"
#include "smagent/error.hpp"
#include "smagent/scene.hpp"

namespace smagent {

namespace builtin_detail {

inline const Json& input(const ActionCall& call, const char* name) {
  auto it = call.inputs.find(name);
  if (it == call.inputs.end()) throw Error(Errc::InvalidArgument, std::string("input '") + name + "' is missing");
  return *it;
}

inline std::string string_input(const ActionCall& call, const char* name) {
  const Json& v = input(call, name);
  if (!v.is_string()) throw Error(Errc::InvalidArgument, std::string("input '") + name + "' must be a string");
  return v.get<std::string>();
}

inline std::vector<std::string> id_list(const Json& v) {
  if (!v.is_array()) throw Error(Errc::InvalidArgument, "expected an array of object ids, got " + compact(v));
  std::vector<std::string> ids;
  for (const auto& e : v) {
    if (!e.is_string()) throw Error(Errc::InvalidArgument, "object id " + compact(e) + " is not a string");
    ids.push_back(e.get<std::string>());
  }
  return ids;
}

inline Provider& provider_of(const ActionCall& call) {
  if (call.provider == nullptr) throw Error(Errc::ProviderError, "action '" + call.spec.name + "' needs a provider");
  return *call.provider;
}

inline ParameterSpec scene_param() {
  return internal_param("scene", DataType::json, "scene graph of the image");
}

}  // namespace builtin_detail

/// filter, relation, checking, query, countObjects, classifyQuestion,
/// extractObjects and note.
inline ActionRegistry builtin_registry() {
  using namespace builtin_detail;
  ActionRegistry r;

  r.register_action({"filter",
                     {external_param("predicate", DataType::json,
                                     "attribute constraints, e.g. {\"material\": \"metal\", \"shape\": {\"not\": \"sphere\"}}"),
                      scene_param()},
                     DataType::json, false, [](const ActionCall& c) {
                       return Json(scene::filter_objects(scene::scene_from_json(input(c, "scene")),
                                                         scene::predicate_from_json(input(c, "predicate"))));
                     }});

  r.register_action({"relation",
                     {external_param("object", DataType::string, "id of the reference object"),
                      external_param("relation", DataType::string, "one of left, right, front, behind"), scene_param()},
                     DataType::json, false, [](const ActionCall& c) {
                       return Json(scene::related_objects(scene::scene_from_json(input(c, "scene")),
                                                          string_input(c, "object"), string_input(c, "relation")));
                     }});

  r.register_action({"checking",
                     {external_param("object", DataType::string, "id of the reference object"),
                      external_param("attribute", DataType::string, "one of color, material, shape, size"), scene_param()},
                     DataType::json, false, [](const ActionCall& c) {
                       return Json(scene::same_attribute(scene::scene_from_json(input(c, "scene")),
                                                         string_input(c, "object"), string_input(c, "attribute")));
                     }});

  r.register_action({"query",
                     {external_param("object", DataType::string, "id of the object"),
                      external_param("attribute", DataType::string, "one of color, material, shape, size"), scene_param()},
                     DataType::string, false, [](const ActionCall& c) {
                       return Json(scene::query_attribute(scene::scene_from_json(input(c, "scene")),
                                                          string_input(c, "object"), string_input(c, "attribute")));
                     }});

  r.register_action({"countObjects",
                     {internal_param("ids", DataType::json, "object ids to count", "objects")},
                     DataType::number, false,
                     [](const ActionCall& c) { return Json(scene::count_objects(id_list(input(c, "ids")))); }});

  r.register_action({"classifyQuestion",
                     {internal_param("question", DataType::string, "the question to classify")},
                     DataType::string, true, [](const ActionCall& c) {
                       return Json(scene::classify_question(provider_of(c), string_input(c, "question")));
                     }});

  r.register_action({"extractObjects",
                     {scene_param(), internal_param("question", DataType::string, "the question being answered")},
                     DataType::json, true, [](const ActionCall& c) {
                       return Json(scene::extract_objects(provider_of(c), scene::scene_from_json(input(c, "scene")),
                                                          string_input(c, "question")));
                     }});

  r.register_action({"note", {}, DataType::json, false, [](const ActionCall& c) {
                       auto it = c.inputs.find("text");
                       if (it != c.inputs.end()) return *it;
                       return Json(c.spec.effective_output_key());
                     }});
  return r;
}

/// Actions used by the question-answering machines beyond the built-ins:
/// answerQuestion (one completion) and existsObjects ("yes" when the id list
/// is nonempty).
inline void register_qa_actions(ActionRegistry& r) {
  using namespace builtin_detail;
  r.register_action({"answerQuestion",
                     {builtin_detail::scene_param(),
                      internal_param("question", DataType::string, "the question being answered")},
                     DataType::string, true, [](const ActionCall& c) {
                       CompletionRequest req;
                       req.prompt = scene::answer_prompt(scene::scene_from_json(input(c, "scene")),
                                                         string_input(c, "question"));
                       std::string reply = provider_of(c).complete(req);
                       const auto first = reply.find_first_not_of(" \t\r\n");
                       const auto last = reply.find_last_not_of(" \t\r\n");
                       return Json(first == std::string::npos ? std::string() : reply.substr(first, last - first + 1));
                     }});

  r.register_action({"existsObjects",
                     {internal_param("ids", DataType::json, "object ids", "objects")},
                     DataType::string, false, [](const ActionCall& c) {
                       return Json(id_list(input(c, "ids")).empty() ? "no" : "yes");
                     }});
}

inline ActionRegistry qa_registry() {
  ActionRegistry r = builtin_registry();
  register_qa_actions(r);
  return r;
}

}  // namespace smagent
