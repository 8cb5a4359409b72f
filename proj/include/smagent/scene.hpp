#pragma once

// Textual scene graphs (CLEVR vocabulary) and the primitive operations the
// question-answering actions are built from.

#include <algorithm>
#include <array>
#include <cctype>
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
#include "smagent/json_text.hpp"
#include "smagent/machine_json.hpp"
#include "smagent/provider.hpp"

namespace smagent::scene {

inline constexpr std::array<std::string_view, 4> kAttributes = {"color", "material", "shape", "size"};
inline constexpr std::array<std::string_view, 8> kColors = {"gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"};
inline constexpr std::array<std::string_view, 2> kMaterials = {"metal", "rubber"};
inline constexpr std::array<std::string_view, 3> kShapes = {"cube", "sphere", "cylinder"};
inline constexpr std::array<std::string_view, 2> kSizes = {"small", "large"};
inline constexpr std::array<std::string_view, 4> kRelations = {"left", "right", "front", "behind"};

inline bool is_attribute(std::string_view a) {
  return std::find(kAttributes.begin(), kAttributes.end(), a) != kAttributes.end();
}
inline bool is_relation(std::string_view r) {
  return std::find(kRelations.begin(), kRelations.end(), r) != kRelations.end();
}

inline std::string_view inverse_relation(std::string_view r) {
  if (r == "left") return "right";
  if (r == "right") return "left";
  if (r == "front") return "behind";
  if (r == "behind") return "front";
  throw Error(Errc::UnknownRelation, "unknown relation '" + std::string(r) + "'");
}

template <std::size_t N>
inline bool in_vocabulary(const std::array<std::string_view, N>& vocab, std::string_view v) {
  return std::find(vocab.begin(), vocab.end(), v) != vocab.end();
}

struct SceneObject {
  std::string id;
  std::string color;
  std::string material;
  std::string shape;
  std::string size;

  [[nodiscard]] const std::string& attribute(std::string_view name) const {
    if (name == "color") return color;
    if (name == "material") return material;
    if (name == "shape") return shape;
    if (name == "size") return size;
    throw Error(Errc::UnknownAttribute, "unknown attribute '" + std::string(name) + "'");
  }
  bool operator==(const SceneObject&) const = default;
};

/// relations[r][k] holds the objects standing in relation r to k, e.g.
/// relations["left"]["o3"] = {"o1", "o2"} means o1 and o2 are left of o3.
using RelationMap = std::map<std::string, std::map<std::string, std::set<std::string>>>;

struct SceneGraph {
  std::vector<SceneObject> objects;
  RelationMap relations;

  [[nodiscard]] const SceneObject* find(std::string_view id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }

  [[nodiscard]] const SceneObject& at(std::string_view id) const {
    const SceneObject* o = find(id);
    if (o == nullptr) throw Error(Errc::UnknownObject, "no object '" + std::string(id) + "' in the scene");
    return *o;
  }

  /// The given ids in scene order.
  [[nodiscard]] std::vector<std::string> in_scene_order(const std::set<std::string>& ids) const {
    std::vector<std::string> out;
    for (const auto& o : objects)
      if (ids.count(o.id) != 0) out.push_back(o.id);
    return out;
  }

  bool operator==(const SceneGraph&) const = default;
};

/// Adds the inverse of every relation edge, then rejects contradictions: an
/// object related to itself, or one standing both left and right (or front
/// and behind) of another.
inline void complete_inverses(SceneGraph& scene) {
  RelationMap& rel = scene.relations;
  for (auto r : kRelations) rel[std::string(r)];
  for (auto r : kRelations) {
    const std::string inv(inverse_relation(r));
    for (const auto& [key, members] : rel[std::string(r)])
      for (const auto& m : members) rel[inv][m].insert(key);
  }
  for (auto r : kRelations) {
    const std::string inv(inverse_relation(r));
    for (const auto& [key, members] : rel[std::string(r)]) {
      if (members.count(key) != 0)
        throw Error(Errc::InverseConflict, "object '" + key + "' stands in relation '" + std::string(r) + "' to itself");
      auto it = rel[inv].find(key);
      if (it == rel[inv].end()) continue;
      for (const auto& m : members)
        if (it->second.count(m) != 0)
          throw Error(Errc::InverseConflict, "'" + m + "' is both " + std::string(r) + " and " + inv + " of '" + key + "'");
    }
  }
}

/// Builds an invariant-checked scene from {objects: [...], relations: {...}}.
inline SceneGraph scene_from_json(const Json& doc) {
  using json_detail::Reader;
  Reader::expect_object(doc, "");
  Reader::check_keys(doc, "", {"objects", "relations"});
  SceneGraph scene;
  const Json& objects = Reader::array_at(Reader::required(doc, "", "objects"), "/objects");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string ptr = "/objects/" + std::to_string(i);
    const Json& o = objects[i];
    Reader::expect_object(o, ptr);
    Reader::check_keys(o, ptr, {"id", "color", "material", "shape", "size"});
    SceneObject obj;
    obj.id = Reader::identifier_at(Reader::required(o, ptr, "id"), ptr + "/id");
    auto attr = [&](std::string_view key, auto vocab) {
      std::string v = Reader::string_at(Reader::required(o, ptr, key), ptr + "/" + std::string(key));
      if (!in_vocabulary(vocab, v)) throw SchemaError(ptr + "/" + std::string(key), "'" + v + "' is not a valid " + std::string(key));
      return v;
    };
    obj.color = attr("color", kColors);
    obj.material = attr("material", kMaterials);
    obj.shape = attr("shape", kShapes);
    obj.size = attr("size", kSizes);
    if (!ids.insert(obj.id).second) throw SchemaError(ptr + "/id", "duplicate object id '" + obj.id + "'");
    scene.objects.push_back(std::move(obj));
  }
  if (auto it = doc.find("relations"); it != doc.end()) {
    Reader::expect_object(*it, "/relations");
    for (const auto& [rname, table] : it->items()) {
      const std::string rptr = "/relations/" + json_detail::escape_pointer(rname);
      if (!is_relation(rname)) throw SchemaError(rptr, "unknown relation");
      Reader::expect_object(table, rptr);
      for (const auto& [key, members] : table.items()) {
        const std::string kptr = rptr + "/" + json_detail::escape_pointer(key);
        if (ids.count(key) == 0) throw SchemaError(kptr, "unknown object '" + key + "'");
        Reader::array_at(members, kptr);
        auto& set = scene.relations[rname][key];
        for (std::size_t i = 0; i < members.size(); ++i) {
          const std::string m = Reader::string_at(members[i], kptr + "/" + std::to_string(i));
          if (ids.count(m) == 0) throw SchemaError(kptr + "/" + std::to_string(i), "unknown object '" + m + "'");
          set.insert(m);
        }
      }
    }
  }
  complete_inverses(scene);
  return scene;
}

inline SceneGraph parse_scene(std::string_view text) { return scene_from_json(json_detail::parse_json_text(text)); }

/// Canonical JSON form: objects in scene order, every non-empty relation list
/// for every object, members in scene order.
inline Json scene_to_json(const SceneGraph& scene) {
  Json j;
  j["objects"] = Json::array();
  for (const auto& o : scene.objects)
    j["objects"].push_back({{"id", o.id}, {"color", o.color}, {"material", o.material}, {"shape", o.shape}, {"size", o.size}});
  j["relations"] = Json::object();
  for (auto r : kRelations) {
    Json table = Json::object();
    auto it = scene.relations.find(std::string(r));
    if (it != scene.relations.end()) {
      for (const auto& o : scene.objects) {
        auto m = it->second.find(o.id);
        if (m != it->second.end() && !m->second.empty()) table[o.id] = scene.in_scene_order(m->second);
      }
    }
    j["relations"][std::string(r)] = std::move(table);
  }
  return j;
}

/// One attribute constraint: equal to `value`, or different from it when
/// negated.
struct Constraint {
  std::string value;
  bool negated = false;
  bool operator==(const Constraint&) const = default;
};

using Predicate = std::map<std::string, Constraint>;

/// {"material": "metal", "shape": {"not": "sphere"}}
inline Predicate predicate_from_json(const Json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidArgument, "predicate must be an object");
  Predicate p;
  for (const auto& [attr, v] : j.items()) {
    if (v.is_string()) {
      p[attr] = {v.get<std::string>(), false};
    } else if (v.is_object() && v.size() == 1 && v.contains("not") && v["not"].is_string()) {
      p[attr] = {v["not"].get<std::string>(), true};
    } else {
      throw Error(Errc::InvalidArgument, "predicate value for '" + attr + "' must be a string or {\"not\": string}");
    }
  }
  return p;
}

inline Json predicate_to_json(const Predicate& p) {
  Json j = Json::object();
  for (const auto& [attr, c] : p) j[attr] = c.negated ? Json({{"not", c.value}}) : Json(c.value);
  return j;
}

/// Ids of the objects satisfying every constraint, in scene order.
inline std::vector<std::string> filter_objects(const SceneGraph& scene, const Predicate& predicate) {
  for (const auto& [attr, c] : predicate)
    if (!is_attribute(attr)) throw Error(Errc::UnknownAttribute, "unknown attribute '" + attr + "'");
  std::vector<std::string> out;
  for (const auto& o : scene.objects) {
    const bool match = std::all_of(predicate.begin(), predicate.end(), [&](const auto& kv) {
      return (o.attribute(kv.first) == kv.second.value) != kv.second.negated;
    });
    if (match) out.push_back(o.id);
  }
  return out;
}

inline std::vector<std::string> filter_objects(const SceneGraph& scene, const std::map<std::string, std::string>& equals) {
  Predicate p;
  for (const auto& [k, v] : equals) p[k] = {v, false};
  return filter_objects(scene, p);
}

/// Objects standing in `relation` to `object`, in scene order.
inline std::vector<std::string> related_objects(const SceneGraph& scene, std::string_view object, std::string_view relation) {
  (void)scene.at(object);
  if (!is_relation(relation)) throw Error(Errc::UnknownRelation, "unknown relation '" + std::string(relation) + "'");
  auto r = scene.relations.find(std::string(relation));
  if (r == scene.relations.end()) return {};
  auto m = r->second.find(std::string(object));
  if (m == r->second.end()) return {};
  return scene.in_scene_order(m->second);
}

/// Other objects whose `attribute` equals that of `object`.
inline std::vector<std::string> same_attribute(const SceneGraph& scene, std::string_view object, std::string_view attribute) {
  const std::string& value = scene.at(object).attribute(attribute);
  std::vector<std::string> out;
  for (const auto& o : scene.objects)
    if (o.id != object && o.attribute(attribute) == value) out.push_back(o.id);
  return out;
}

inline std::string query_attribute(const SceneGraph& scene, std::string_view object, std::string_view attribute) {
  return scene.at(object).attribute(attribute);
}

/// Number of distinct ids.
inline std::size_t count_objects(const std::vector<std::string>& ids) {
  return std::set<std::string>(ids.begin(), ids.end()).size();
}

// ---------------------------------------------------------------------------
// LLM-backed steps

inline constexpr std::array<std::string_view, 3> kQuestionTypes = {"counting", "judging", "querying"};

inline std::string classification_prompt(std::string_view question) {
  std::string p;
  p += "Classify the question about a scene graph into exactly one of these types:\n";
  p += "- counting: asks how many objects satisfy a condition\n";
  p += "- judging: asks whether a statement about the scene is true or false\n";
  p += "- querying: asks for an attribute of an object\n\n";
  p += "Question: " + std::string(question) + "\n\n";
  p += "Reply with the type only: counting, judging or querying.";
  return p;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Maps a reply to the question type whose label occurs first in it,
/// ignoring case.
inline std::string parse_classification(std::string_view reply) {
  const std::string lower = lowercase(reply);
  std::size_t best = std::string::npos;
  std::string label;
  for (auto t : kQuestionTypes) {
    const std::size_t pos = lower.find(t);
    if (pos < best) {
      best = pos;
      label = std::string(t);
    }
  }
  if (label.empty()) throw Error(Errc::UnclassifiableReply, "no question type in reply '" + std::string(reply.substr(0, 80)) + "'");
  return label;
}

inline std::string classify_question(Provider& provider, std::string_view question) {
  if (question.empty()) throw Error(Errc::InvalidArgument, "question is empty");
  CompletionRequest req;
  req.prompt = classification_prompt(question);
  return parse_classification(provider.complete(req));
}

inline std::string extraction_prompt(const SceneGraph& scene, std::string_view question) {
  std::string p;
  p += "Scene graph:\n" + scene_to_json(scene).dump() + "\n\n";
  p += "Question: " + std::string(question) + "\n\n";
  p += "List the ids of the objects the question asks to count as a JSON array of strings, for example [\"o1\", \"o2\"].";
  return p;
}

/// Reads the first JSON array of id strings in a reply and checks every id
/// against the scene.
inline std::vector<std::string> parse_extraction(const SceneGraph& scene, std::string_view reply) {
  const auto arr = first_json(reply, '[');
  if (!arr) throw Error(Errc::UnparseableReply, "no JSON array in reply '" + std::string(reply.substr(0, 80)) + "'");
  std::vector<std::string> ids;
  for (const auto& v : *arr) {
    if (!v.is_string()) throw Error(Errc::UnparseableReply, "array element " + compact(v) + " is not an id string");
    const std::string id = v.get<std::string>();
    if (scene.find(id) == nullptr) throw Error(Errc::UnknownObject, "reply names unknown object '" + id + "'");
    ids.push_back(id);
  }
  return ids;
}

inline std::vector<std::string> extract_objects(Provider& provider, const SceneGraph& scene, std::string_view question) {
  CompletionRequest req;
  req.prompt = extraction_prompt(scene, question);
  return parse_extraction(scene, provider.complete(req));
}

inline std::string answer_prompt(const SceneGraph& scene, std::string_view question) {
  std::string p;
  p += "Scene graph:\n" + scene_to_json(scene).dump() + "\n\n";
  p += "Question: " + std::string(question) + "\n\n";
  p += "Answer with a single word: yes or no for a true/false question, otherwise the attribute value.";
  return p;
}

}  // namespace smagent::scene
