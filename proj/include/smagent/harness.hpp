#pragma once

// Batch evaluation over generated mini-CLEVR datasets: a seeded scene and
// question generator, a brute-force answer oracle, oracle-faithful scripted
// providers and exact-match scoring.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "smagent/actions.hpp"
#include "smagent/belief.hpp"
#include "smagent/engine.hpp"
#include "smagent/error.hpp"
#include "smagent/machine_json.hpp"
#include "smagent/policy.hpp"
#include "smagent/provider.hpp"
#include "smagent/scene.hpp"

namespace smagent::harness {

using scene::Predicate;
using scene::SceneGraph;
using scene::SceneObject;

// ---------------------------------------------------------------------------
// Question templates

enum class TemplateKind { CountFiltered, CountRelated, CountSame, JudgeExists, JudgeRelated, QueryAttr, QueryRelated };

inline constexpr std::array<std::string_view, 7> kTemplateNames = {
    "CountFiltered", "CountRelated", "CountSame", "JudgeExists", "JudgeRelated", "QueryAttr", "QueryRelated"};

constexpr std::string_view to_string(TemplateKind k) noexcept { return kTemplateNames[static_cast<std::size_t>(k)]; }

inline TemplateKind template_kind_from(std::string_view name) {
  for (std::size_t i = 0; i < kTemplateNames.size(); ++i)
    if (kTemplateNames[i] == name) return static_cast<TemplateKind>(i);
  throw Error(Errc::InvalidArgument, "unknown question template '" + std::string(name) + "'");
}

/// The question type a template belongs to.
inline std::string question_type(TemplateKind k) {
  switch (k) {
    case TemplateKind::CountFiltered:
    case TemplateKind::CountRelated:
    case TemplateKind::CountSame: return "counting";
    case TemplateKind::JudgeExists:
    case TemplateKind::JudgeRelated: return "judging";
    case TemplateKind::QueryAttr:
    case TemplateKind::QueryRelated: return "querying";
  }
  return "counting";
}

/// Structured form of a generated question. Which fields matter depends on
/// the kind:
///   CountFiltered, JudgeExists: predicate
///   CountRelated, JudgeRelated: anchor, relation
///   CountSame: anchor, attribute
///   QueryAttr: anchor, attribute
///   QueryRelated: anchor, relation, target_desc, attribute
/// `anchor_desc` is a predicate that singles out the anchor in the scene.
struct QuestionTemplate {
  TemplateKind kind = TemplateKind::CountFiltered;
  Predicate predicate;
  std::string anchor;
  Predicate anchor_desc;
  std::string relation;
  std::string attribute;
  Predicate target_desc;

  bool operator==(const QuestionTemplate&) const = default;
};

inline Json template_to_json(const QuestionTemplate& t) {
  Json j;
  j["kind"] = std::string(to_string(t.kind));
  if (!t.predicate.empty()) j["predicate"] = scene::predicate_to_json(t.predicate);
  if (!t.anchor.empty()) j["anchor"] = t.anchor;
  if (!t.anchor_desc.empty()) j["anchor_desc"] = scene::predicate_to_json(t.anchor_desc);
  if (!t.relation.empty()) j["relation"] = t.relation;
  if (!t.attribute.empty()) j["attribute"] = t.attribute;
  if (!t.target_desc.empty()) j["target_desc"] = scene::predicate_to_json(t.target_desc);
  return j;
}

inline QuestionTemplate template_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw Error(Errc::InvalidArgument, "template needs a string \"kind\"");
  QuestionTemplate t;
  t.kind = template_kind_from(j["kind"].get<std::string>());
  auto str = [&](const char* key) { return j.contains(key) ? j[key].get<std::string>() : std::string(); };
  auto pred = [&](const char* key) { return j.contains(key) ? scene::predicate_from_json(j[key]) : Predicate{}; };
  t.predicate = pred("predicate");
  t.anchor = str("anchor");
  t.anchor_desc = pred("anchor_desc");
  t.relation = str("relation");
  t.attribute = str("attribute");
  t.target_desc = pred("target_desc");
  return t;
}

// ---------------------------------------------------------------------------
// Oracle: direct enumeration over objects and relation tables

namespace oracle {

inline bool matches(const SceneObject& o, const Predicate& p) {
  for (const auto& [attr, c] : p) {
    std::string v;
    if (attr == "color") v = o.color;
    else if (attr == "material") v = o.material;
    else if (attr == "shape") v = o.shape;
    else if (attr == "size") v = o.size;
    else return false;
    if ((v == c.value) == c.negated) return false;
  }
  return true;
}

inline std::string attr_of(const SceneObject& o, const std::string& attr) {
  if (attr == "color") return o.color;
  if (attr == "material") return o.material;
  if (attr == "shape") return o.shape;
  return o.size;
}

inline std::vector<std::string> related(const SceneGraph& s, const std::string& anchor, const std::string& rel) {
  std::vector<std::string> out;
  auto r = s.relations.find(rel);
  if (r == s.relations.end()) return out;
  auto m = r->second.find(anchor);
  if (m == r->second.end()) return out;
  for (const auto& o : s.objects)
    if (m->second.count(o.id) != 0) out.push_back(o.id);
  return out;
}

inline const SceneObject& object(const SceneGraph& s, const std::string& id) {
  for (const auto& o : s.objects)
    if (o.id == id) return o;
  throw Error(Errc::UnknownObject, "no object '" + id + "'");
}

}  // namespace oracle

/// Ids of the objects a counting or judging question ranges over; empty for
/// querying templates.
inline std::vector<std::string> oracle_objects(const SceneGraph& s, const QuestionTemplate& t) {
  std::vector<std::string> out;
  switch (t.kind) {
    case TemplateKind::CountFiltered:
    case TemplateKind::JudgeExists:
      for (const auto& o : s.objects)
        if (oracle::matches(o, t.predicate)) out.push_back(o.id);
      return out;
    case TemplateKind::CountRelated:
    case TemplateKind::JudgeRelated: return oracle::related(s, t.anchor, t.relation);
    case TemplateKind::CountSame: {
      const std::string v = oracle::attr_of(oracle::object(s, t.anchor), t.attribute);
      for (const auto& o : s.objects)
        if (o.id != t.anchor && oracle::attr_of(o, t.attribute) == v) out.push_back(o.id);
      return out;
    }
    case TemplateKind::QueryAttr:
    case TemplateKind::QueryRelated: return out;
  }
  return out;
}

inline std::string oracle_answer(const SceneGraph& s, const QuestionTemplate& t) {
  switch (question_type(t.kind)[0]) {
    case 'c': return std::to_string(oracle_objects(s, t).size());
    case 'j': return oracle_objects(s, t).empty() ? "no" : "yes";
    default: break;
  }
  if (t.kind == TemplateKind::QueryAttr) return oracle::attr_of(oracle::object(s, t.anchor), t.attribute);
  std::vector<const SceneObject*> hits;
  for (const auto& id : oracle::related(s, t.anchor, t.relation)) {
    const SceneObject& o = oracle::object(s, id);
    if (oracle::matches(o, t.target_desc)) hits.push_back(&o);
  }
  if (hits.size() != 1) throw Error(Errc::InvalidArgument, "query target is not unique");
  return oracle::attr_of(*hits.front(), t.attribute);
}

/// Id of the object a querying template asks about.
inline std::string query_target(const SceneGraph& s, const QuestionTemplate& t) {
  if (t.kind == TemplateKind::QueryAttr) return t.anchor;
  for (const auto& id : oracle::related(s, t.anchor, t.relation))
    if (oracle::matches(oracle::object(s, id), t.target_desc)) return id;
  throw Error(Errc::InvalidArgument, "query target is not in the scene");
}

// ---------------------------------------------------------------------------
// Program steps shared by the scripted plans and the library executor

/// One operation of a plan: an action name with its external arguments.
struct PlanStep {
  std::string op;  // filter, relation, checking, query, count, exists
  Json arguments = Json::object();
};

/// Operations that answer the question with the action library. The last
/// step is count, exists or query.
inline std::vector<PlanStep> plan_for(const SceneGraph& s, const QuestionTemplate& t) {
  std::vector<PlanStep> plan;
  auto filter = [&](const Predicate& p) { plan.push_back({"filter", {{"predicate", scene::predicate_to_json(p)}}}); };
  auto relation = [&] { plan.push_back({"relation", {{"object", t.anchor}, {"relation", t.relation}}}); };
  switch (t.kind) {
    case TemplateKind::CountFiltered:
      filter(t.predicate);
      plan.push_back({"count", Json::object()});
      break;
    case TemplateKind::JudgeExists:
      filter(t.predicate);
      plan.push_back({"exists", Json::object()});
      break;
    case TemplateKind::CountRelated:
    case TemplateKind::JudgeRelated:
      filter(t.anchor_desc);
      relation();
      plan.push_back({t.kind == TemplateKind::CountRelated ? "count" : "exists", Json::object()});
      break;
    case TemplateKind::CountSame:
      filter(t.anchor_desc);
      plan.push_back({"checking", {{"object", t.anchor}, {"attribute", t.attribute}}});
      plan.push_back({"count", Json::object()});
      break;
    case TemplateKind::QueryAttr:
      filter(t.anchor_desc);
      plan.push_back({"query", {{"object", t.anchor}, {"attribute", t.attribute}}});
      break;
    case TemplateKind::QueryRelated:
      filter(t.anchor_desc);
      relation();
      plan.push_back({"query", {{"object", query_target(s, t)}, {"attribute", t.attribute}}});
      break;
  }
  return plan;
}

/// Runs a plan through the scene library's primitive operations.
inline std::string library_answer(const SceneGraph& s, const QuestionTemplate& t) {
  std::vector<std::string> selection;
  std::string answer;
  for (const auto& step : plan_for(s, t)) {
    const Json& a = step.arguments;
    if (step.op == "filter") {
      selection = scene::filter_objects(s, scene::predicate_from_json(a["predicate"]));
    } else if (step.op == "relation") {
      selection = scene::related_objects(s, a["object"].get<std::string>(), a["relation"].get<std::string>());
    } else if (step.op == "checking") {
      selection = scene::same_attribute(s, a["object"].get<std::string>(), a["attribute"].get<std::string>());
    } else if (step.op == "count") {
      answer = std::to_string(scene::count_objects(selection));
    } else if (step.op == "exists") {
      answer = selection.empty() ? "no" : "yes";
    } else if (step.op == "query") {
      answer = scene::query_attribute(s, a["object"].get<std::string>(), a["attribute"].get<std::string>());
    }
  }
  return answer;
}

// ---------------------------------------------------------------------------
// Dataset

struct DatasetItem {
  std::string question;
  std::string scene_file;
  std::optional<std::string> answer;
  std::optional<std::string> type;
  std::optional<QuestionTemplate> question_template;
  std::size_t scene_index = 0;  // into Dataset::scenes
};

struct Dataset {
  std::vector<SceneGraph> scenes;
  std::vector<DatasetItem> items;
};

namespace gen_detail {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  template <typename C>
  const auto& pick(const C& c) {
    return c[below(c.size())];
  }
  bool chance(std::size_t one_in) { return below(one_in) == 0; }

 private:
  std::mt19937_64 engine_;
};

inline constexpr std::array<std::string_view, 4> kDescOrder = {"size", "color", "material", "shape"};

/// Attribute subsets tried, in order, when describing an object.
inline const std::vector<std::vector<std::string>>& description_sets() {
  static const std::vector<std::vector<std::string>> sets = {
      {"shape"},          {"color", "shape"},           {"size", "shape"},
      {"material", "shape"}, {"size", "color", "shape"}, {"color", "material", "shape"},
      {"size", "material", "shape"}, {"size", "color", "material", "shape"}};
  return sets;
}

inline Predicate describe_with(const SceneObject& o, const std::vector<std::string>& attrs) {
  Predicate p;
  for (const auto& a : attrs) p[a] = {oracle::attr_of(o, a), false};
  return p;
}

/// Shortest description singling out `id` among `pool`, if any.
inline std::optional<Predicate> unique_description(const SceneGraph& s, const std::string& id,
                                                   const std::vector<std::string>& pool) {
  const SceneObject& o = oracle::object(s, id);
  for (const auto& attrs : description_sets()) {
    const Predicate p = describe_with(o, attrs);
    std::size_t hits = 0;
    for (const auto& other : pool)
      if (oracle::matches(oracle::object(s, other), p)) ++hits;
    if (hits == 1) return p;
  }
  return std::nullopt;
}

inline std::string plural(const std::string& shape) { return shape + "s"; }

/// "large red metal cube", or "large red object" without a shape.
inline std::string noun_phrase(const Predicate& p, bool plural_form) {
  std::string out;
  for (auto a : kDescOrder) {
    if (a == "shape") continue;
    auto it = p.find(std::string(a));
    if (it == p.end() || it->second.negated) continue;
    out += it->second.value + " ";
  }
  auto shape = p.find("shape");
  std::string noun = "object";
  if (shape != p.end() && !shape->second.negated) noun = shape->second.value;
  out += plural_form ? plural(noun) : noun;
  return out;
}

inline std::string relation_phrase(const std::string& rel) {
  if (rel == "left") return "left of";
  if (rel == "right") return "right of";
  if (rel == "front") return "in front of";
  return "behind";
}

inline SceneGraph random_scene(Rng& rng) {
  SceneGraph s;
  const std::size_t n = 3 + rng.below(8);
  while (s.objects.size() < n) {
    SceneObject o;
    o.id = "o" + std::to_string(s.objects.size() + 1);
    o.color = std::string(rng.pick(scene::kColors));
    o.material = std::string(rng.pick(scene::kMaterials));
    o.shape = std::string(rng.pick(scene::kShapes));
    o.size = std::string(rng.pick(scene::kSizes));
    const bool duplicate = std::any_of(s.objects.begin(), s.objects.end(), [&](const SceneObject& other) {
      return other.color == o.color && other.material == o.material && other.shape == o.shape && other.size == o.size;
    });
    if (!duplicate) s.objects.push_back(std::move(o));
  }
  auto shuffled = [&] {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    return order;
  };
  // An ordering from left to right (and from front to back) fixes both
  // relations of every pair.
  const auto lr = shuffled();
  const auto fb = shuffled();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& a = s.objects[lr[i]].id;
      const auto& b = s.objects[lr[j]].id;
      if (i < j) s.relations["left"][b].insert(a);
      const auto& c = s.objects[fb[i]].id;
      const auto& d = s.objects[fb[j]].id;
      if (i < j) s.relations["front"][d].insert(c);
    }
  }
  scene::complete_inverses(s);
  return s;
}

inline std::vector<std::string> all_ids(const SceneGraph& s) {
  std::vector<std::string> ids;
  for (const auto& o : s.objects) ids.push_back(o.id);
  return ids;
}

/// A random object that has a unique description, with that description.
inline std::pair<std::string, Predicate> random_anchor(Rng& rng, const SceneGraph& s) {
  const auto ids = all_ids(s);
  const std::string id = rng.pick(ids);
  return {id, *unique_description(s, id, ids)};
}

inline Predicate random_predicate(Rng& rng, const SceneGraph& s) {
  const SceneObject& seed_obj = rng.pick(s.objects);
  std::vector<std::string> attrs(scene::kAttributes.begin(), scene::kAttributes.end());
  Predicate p;
  const std::size_t k = 1 + rng.below(2);
  for (std::size_t i = 0; i < k; ++i) {
    const std::string a = attrs[rng.below(attrs.size())];
    // Half the time use a value seen in the scene, otherwise any value.
    if (rng.chance(2)) {
      p[a] = {oracle::attr_of(seed_obj, a), false};
    } else if (a == "color") {
      p[a] = {std::string(rng.pick(scene::kColors)), false};
    } else if (a == "material") {
      p[a] = {std::string(rng.pick(scene::kMaterials)), false};
    } else if (a == "shape") {
      p[a] = {std::string(rng.pick(scene::kShapes)), false};
    } else {
      p[a] = {std::string(rng.pick(scene::kSizes)), false};
    }
  }
  return p;
}

inline std::string random_attribute(Rng& rng) { return std::string(rng.pick(scene::kAttributes)); }
inline std::string random_relation(Rng& rng) { return std::string(rng.pick(scene::kRelations)); }

inline std::string question_text(const QuestionTemplate& t) {
  switch (t.kind) {
    case TemplateKind::CountFiltered: {
      auto excluded = t.predicate.find("shape");
      if (excluded != t.predicate.end() && excluded->second.negated)
        return "How many " + noun_phrase(t.predicate, true) + " would there be if you didn't include " +
               plural(excluded->second.value) + "?";
      return "How many " + noun_phrase(t.predicate, true) + " are there?";
    }
    case TemplateKind::CountRelated:
      return "How many objects are " + relation_phrase(t.relation) + " the " + noun_phrase(t.anchor_desc, false) + "?";
    case TemplateKind::CountSame:
      return "How many other objects have the same " + t.attribute + " as the " + noun_phrase(t.anchor_desc, false) + "?";
    case TemplateKind::JudgeExists: return "Are there any " + noun_phrase(t.predicate, true) + "?";
    case TemplateKind::JudgeRelated:
      return "Is there anything " + relation_phrase(t.relation) + " the " + noun_phrase(t.anchor_desc, false) + "?";
    case TemplateKind::QueryAttr:
      return "What is the " + t.attribute + " of the " + noun_phrase(t.anchor_desc, false) + "?";
    case TemplateKind::QueryRelated:
      return "What is the " + t.attribute + " of the " + noun_phrase(t.target_desc, false) + " " +
             relation_phrase(t.relation) + " the " + noun_phrase(t.anchor_desc, false) + "?";
  }
  return {};
}

inline QuestionTemplate random_template(Rng& rng, const SceneGraph& s, std::size_t type_index) {
  QuestionTemplate t;
  if (type_index == 0) {
    const std::size_t which = rng.below(3);
    if (which == 0) {
      t.kind = TemplateKind::CountFiltered;
      t.predicate = random_predicate(rng, s);
      if (t.predicate.count("shape") == 0 && rng.chance(2)) t.predicate["shape"] = {std::string(rng.pick(scene::kShapes)), true};
    } else if (which == 1) {
      t.kind = TemplateKind::CountRelated;
      std::tie(t.anchor, t.anchor_desc) = random_anchor(rng, s);
      t.relation = random_relation(rng);
    } else {
      t.kind = TemplateKind::CountSame;
      std::tie(t.anchor, t.anchor_desc) = random_anchor(rng, s);
      t.attribute = random_attribute(rng);
    }
  } else if (type_index == 1) {
    if (rng.chance(2)) {
      t.kind = TemplateKind::JudgeExists;
      t.predicate = random_predicate(rng, s);
    } else {
      t.kind = TemplateKind::JudgeRelated;
      std::tie(t.anchor, t.anchor_desc) = random_anchor(rng, s);
      t.relation = random_relation(rng);
    }
  } else {
    std::tie(t.anchor, t.anchor_desc) = random_anchor(rng, s);
    t.attribute = random_attribute(rng);
    t.kind = TemplateKind::QueryAttr;
    if (rng.chance(2)) {
      const std::string rel = random_relation(rng);
      const auto pool = oracle::related(s, t.anchor, rel);
      if (!pool.empty()) {
        const std::string target = rng.pick(pool);
        if (auto desc = unique_description(s, target, pool)) {
          t.kind = TemplateKind::QueryRelated;
          t.relation = rel;
          t.target_desc = *desc;
        }
      }
    }
  }
  return t;
}

inline std::string scene_file_name(std::size_t index) {
  std::string n = std::to_string(index);
  while (n.size() < 3) n = "0" + n;
  return "scenes/scene_" + n + ".json";
}

}  // namespace gen_detail

/// Deterministic synthetic dataset. Question types cycle counting, judging,
/// querying within each scene.
inline Dataset generate_mini_clevr(std::uint64_t seed, std::size_t n_scenes, std::size_t questions_per_scene) {
  if (n_scenes == 0 || questions_per_scene == 0)
    throw Error(Errc::MinSize, "a dataset needs at least one scene and one question per scene");
  gen_detail::Rng rng(seed);
  Dataset ds;
  for (std::size_t si = 0; si < n_scenes; ++si) {
    ds.scenes.push_back(gen_detail::random_scene(rng));
    const SceneGraph& s = ds.scenes.back();
    for (std::size_t qi = 0; qi < questions_per_scene; ++qi) {
      const QuestionTemplate t = gen_detail::random_template(rng, s, qi % 3);
      DatasetItem item;
      item.question = gen_detail::question_text(t);
      item.scene_file = gen_detail::scene_file_name(si);
      item.answer = oracle_answer(s, t);
      item.type = question_type(t.kind);
      item.question_template = t;
      item.scene_index = si;
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

/// JSON lines, one item per line, keys in a fixed order.
inline std::string dataset_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& item : ds.items) {
    nlohmann::ordered_json j;
    j["question"] = item.question;
    j["scene_file"] = item.scene_file;
    if (item.answer) j["answer"] = *item.answer;
    if (item.type) j["type"] = *item.type;
    if (item.question_template) j["template"] = template_to_json(*item.question_template);
    out += j.dump() + "\n";
  }
  return out;
}

/// Writes dataset.jsonl and the scene files under `dir`; returns the JSONL
/// path.
inline std::filesystem::path write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "scenes");
  std::set<std::string> written;
  for (const auto& item : ds.items) {
    if (!written.insert(item.scene_file).second) continue;
    std::ofstream f(dir / item.scene_file, std::ios::binary);
    f << scene::scene_to_json(ds.scenes[item.scene_index]).dump(2) << "\n";
    if (!f) throw Error(Errc::Io, "cannot write " + (dir / item.scene_file).string());
  }
  const auto path = dir / "dataset.jsonl";
  std::ofstream f(path, std::ios::binary);
  f << dataset_jsonl(ds);
  if (!f) throw Error(Errc::Io, "cannot write " + path.string());
  return path;
}

/// Reads a JSONL dataset; scene files resolve relative to its directory.
inline Dataset load_dataset(const std::filesystem::path& path) {
  const std::string text = read_text_file(path.string());
  const auto base = path.parent_path();
  Dataset ds;
  std::map<std::string, std::size_t> scene_ids;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = json_detail::parse_json_text(line);
    } catch (const JsonSyntaxError& e) {
      throw JsonSyntaxError(lineno, e.column(), "dataset line is not JSON");
    }
    const std::string ptr = "/" + std::to_string(lineno - 1);
    json_detail::Reader::expect_object(j, ptr);
    json_detail::Reader::check_keys(j, ptr, {"question", "scene_file", "answer", "type", "template"});
    DatasetItem item;
    item.question = json_detail::Reader::string_at(json_detail::Reader::required(j, ptr, "question"), ptr + "/question");
    item.scene_file = json_detail::Reader::string_at(json_detail::Reader::required(j, ptr, "scene_file"), ptr + "/scene_file");
    if (j.contains("answer")) item.answer = json_detail::Reader::string_at(j["answer"], ptr + "/answer");
    if (j.contains("type")) item.type = json_detail::Reader::string_at(j["type"], ptr + "/type");
    if (j.contains("template")) item.question_template = template_from_json(j["template"]);
    auto it = scene_ids.find(item.scene_file);
    if (it == scene_ids.end()) {
      ds.scenes.push_back(scene::parse_scene(read_text_file((base / item.scene_file).string())));
      it = scene_ids.emplace(item.scene_file, ds.scenes.size() - 1).first;
    }
    item.scene_index = it->second;
    ds.items.push_back(std::move(item));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Scoring

/// Lowercase, trimmed, trailing period removed, number words as digits.
inline std::string normalize_answer(std::string_view raw) {
  std::string s = scene::lowercase(raw);
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  s = s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
  while (!s.empty() && s.back() == '.') s.pop_back();
  static const std::array<std::string_view, 21> words = {
      "zero", "one",    "two",    "three",    "four",     "five",    "six",     "seven",     "eight",    "nine",    "ten",
      "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty"};
  for (std::size_t i = 0; i < words.size(); ++i)
    if (s == words[i]) return std::to_string(i);
  // "2.0" from a numeric output
  if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0 &&
      std::all_of(s.begin(), s.end() - 2, [](char c) { return c >= '0' && c <= '9'; }))
    s.resize(s.size() - 2);
  return s;
}

inline std::string answer_text(const Json& output) {
  if (output.is_string()) return output.get<std::string>();
  if (output.is_null()) return {};
  return compact(output);
}

struct ItemResult {
  std::size_t index = 0;
  std::string question;
  std::string expected;
  std::string got;
  std::size_t calls = 0;
  RunStatus status = RunStatus::Failed;
  std::string reason;
  bool correct = false;
};

struct EvalReport {
  std::size_t n = 0;
  double exact_match_accuracy = 0.0;
  double avg_provider_calls = 0.0;
  std::vector<ItemResult> per_item;

  [[nodiscard]] Json to_json() const {
    Json j;
    j["n"] = n;
    j["exact_match_accuracy"] = exact_match_accuracy;
    j["avg_provider_calls"] = avg_provider_calls;
    j["per_item"] = Json::array();
    for (const auto& r : per_item) {
      Json item = {{"index", r.index},   {"question", r.question},
                   {"expected", r.expected}, {"got", r.got},
                   {"calls", r.calls},   {"status", std::string(to_string(r.status))},
                   {"correct", r.correct}};
      if (!r.reason.empty()) item["reason"] = r.reason;
      j["per_item"].push_back(std::move(item));
    }
    return j;
  }

  [[nodiscard]] std::string summary_table() const {
    std::ostringstream out;
    std::size_t correct = 0;
    std::map<std::string, std::size_t> by_status;
    for (const auto& r : per_item) {
      correct += r.correct ? 1 : 0;
      ++by_status[std::string(to_string(r.status))];
    }
    out << "items                 " << n << "\n";
    out << "correct               " << correct << "\n";
    out.setf(std::ios::fixed);
    out.precision(4);
    out << "exact match accuracy  " << exact_match_accuracy << "\n";
    out << "avg provider calls    " << avg_provider_calls << "\n";
    for (const auto& [status, count] : by_status) out << "status " << status << std::string(15 - std::min<std::size_t>(15, status.size()), ' ') << count << "\n";
    return out.str();
  }
};

/// A ready agent for one item plus the provider it talks to.
struct AgentHandle {
  std::shared_ptr<Provider> provider;
  std::unique_ptr<Agent> agent;
};

using AgentFactory = std::function<AgentHandle(const DatasetItem&, const SceneGraph&)>;

struct EvalOptions {
  std::size_t runs = 1;
  RunLimits limits;
};

/// Fresh agent per item and run. Failed and Waiting items score zero.
/// Items without a reference answer are scored against the oracle when a
/// template is present.
inline EvalReport run_eval(const AgentFactory& factory, const Dataset& ds, const EvalOptions& opts = {}) {
  if (ds.items.empty()) throw Error(Errc::MinSize, "dataset is empty");
  if (opts.runs == 0) throw Error(Errc::InvalidArgument, "runs must be at least 1");
  EvalReport report;
  double correct = 0;
  double calls = 0;
  for (std::size_t run = 0; run < opts.runs; ++run) {
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
      const DatasetItem& item = ds.items[i];
      const SceneGraph& s = ds.scenes.at(item.scene_index);
      ItemResult r;
      r.index = i;
      r.question = item.question;
      if (item.answer) r.expected = *item.answer;
      else if (item.question_template) r.expected = oracle_answer(s, *item.question_template);
      try {
        AgentHandle h = factory(item, s);
        const RunResult res = h.agent->run();
        r.status = res.status;
        r.reason = res.reason;
        r.calls = res.stats.calls;
        r.got = answer_text(res.output);
      } catch (const std::exception& e) {
        r.status = RunStatus::Failed;
        r.reason = e.what();
      }
      r.correct = r.status == RunStatus::Completed && normalize_answer(r.got) == normalize_answer(r.expected);
      correct += r.correct ? 1 : 0;
      calls += static_cast<double>(r.calls);
      if (run == 0) report.per_item.push_back(std::move(r));
    }
  }
  report.n = ds.items.size();
  const double total = static_cast<double>(ds.items.size() * opts.runs);
  report.exact_match_accuracy = correct / total;
  report.avg_provider_calls = calls / total;
  return report;
}

// ---------------------------------------------------------------------------
// Agent variants

enum class Variant { routing, react, planning };

inline Variant variant_from(std::string_view name) {
  if (name == "routing") return Variant::routing;
  if (name == "react") return Variant::react;
  if (name == "planning") return Variant::planning;
  throw Error(Errc::InvalidArgument, "unknown variant '" + std::string(name) + "'");
}

/// Replies an ideal model would give for an item under each machine design.
///   routing: question type, then the object ids (counting) or the answer
///   react: one policy reply per plan operation, then finish with the answer
///   planning: one policy reply per plan operation
inline std::vector<std::string> oracle_script(Variant v, const SceneGraph& s, const QuestionTemplate& t) {
  const std::string answer = oracle_answer(s, t);
  std::vector<std::string> replies;
  if (v == Variant::routing) {
    const std::string type = question_type(t.kind);
    replies.push_back(type);
    replies.push_back(type == "counting" ? Json(oracle_objects(s, t)).dump() : answer);
    return replies;
  }
  for (const auto& step : plan_for(s, t)) {
    if (v == Variant::react && (step.op == "count" || step.op == "exists")) continue;
    replies.push_back(Json({{"event", step.op}, {"arguments", step.arguments}}).dump());
  }
  if (v == Variant::react) replies.push_back(Json({{"event", "finish"}, {"arguments", {{"text", answer}}}}).dump());
  return replies;
}

/// Puts the question in the task context and seeds question and scene in
/// the store.
inline void seed_belief(Belief& b, const std::string& question, const SceneGraph& s) {
  b.add_message(Role::user, question);
  b.kv_set("question", question);
  b.kv_set("scene", scene::scene_to_json(s));
}

inline std::string task_description(const std::string& question, const SceneGraph& s) {
  return "Answer the question about the scene graph by choosing operations step by step.\nQuestion: " + question +
         "\nScene graph: " + scene::scene_to_json(s).dump();
}

struct VariantSetup {
  Variant variant = Variant::routing;
  std::shared_ptr<const StateMachine> machine;
  std::shared_ptr<const ActionRegistry> registry;
  std::vector<Rule> rules;  // routing only
  RunLimits limits;
  std::size_t history_budget = 3000;
};

inline PolicyStack policy_for(const VariantSetup& setup, const std::string& question, const SceneGraph& s) {
  PolicyStack stack;
  if (!setup.rules.empty()) stack.push_back(PolicyStage::rule_stage(setup.rules));
  if (setup.variant != Variant::routing || setup.rules.empty()) {
    LlmPolicyConfig cfg;
    cfg.task_description = task_description(question, s);
    cfg.history_token_budget = setup.history_budget;
    stack.push_back(PolicyStage::llm_stage(cfg));
  }
  return stack;
}

/// Agents backed by a fresh oracle-faithful scripted provider per item.
inline AgentFactory oracle_factory(VariantSetup setup) {
  return [setup](const DatasetItem& item, const SceneGraph& s) {
    if (!item.question_template) throw Error(Errc::InvalidArgument, "oracle scripts need item templates");
    AgentHandle h;
    h.provider = std::make_shared<ScriptedProvider>(oracle_script(setup.variant, s, *item.question_template));
    Belief b;
    seed_belief(b, item.question, s);
    h.agent = std::make_unique<Agent>(setup.machine, setup.registry, policy_for(setup, item.question, s),
                                      h.provider.get(), setup.limits, std::move(b));
    return h;
  };
}

/// Agents sharing one provider, e.g. an HTTP backend.
inline AgentFactory shared_provider_factory(VariantSetup setup, std::shared_ptr<Provider> provider) {
  return [setup, provider](const DatasetItem& item, const SceneGraph& s) {
    AgentHandle h;
    h.provider = provider;
    Belief b;
    seed_belief(b, item.question, s);
    h.agent = std::make_unique<Agent>(setup.machine, setup.registry, policy_for(setup, item.question, s),
                                      provider.get(), setup.limits, std::move(b));
    return h;
  };
}

}  // namespace smagent::harness
