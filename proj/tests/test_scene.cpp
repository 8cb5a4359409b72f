#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "smagent/builtins.hpp"
#include "smagent/scene.hpp"
#include "support.hpp"

using namespace smagent;
using namespace smagent::scene;
using testing_support::s1;

namespace {

using Ids = std::vector<std::string>;

template <std::size_t N>
std::string pick(std::mt19937_64& rng, const std::array<std::string_view, N>& vocab) {
  return std::string(vocab[rng() % N]);
}

SceneGraph random_scene(std::mt19937_64& rng) {
  SceneGraph s;
  const std::size_t n = 1 + rng() % 8;
  for (std::size_t i = 0; i < n; ++i)
    s.objects.push_back({"o" + std::to_string(i + 1), pick(rng, kColors), pick(rng, kMaterials), pick(rng, kShapes),
                         pick(rng, kSizes)});
  return s;
}

Predicate random_predicate(std::mt19937_64& rng) {
  Predicate p;
  if (rng() % 2) p["color"] = {pick(rng, kColors), rng() % 3 == 0};
  if (rng() % 2) p["material"] = {pick(rng, kMaterials), rng() % 3 == 0};
  if (rng() % 2) p["shape"] = {pick(rng, kShapes), rng() % 3 == 0};
  if (rng() % 2) p["size"] = {pick(rng, kSizes), rng() % 3 == 0};
  return p;
}

std::optional<Errc> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST(Scene, FilterExamples) {
  const SceneGraph s = s1();
  EXPECT_EQ(filter_objects(s, std::map<std::string, std::string>{{"material", "metal"}}), (Ids{"o1", "o2"}));
  EXPECT_EQ(filter_objects(s, predicate_from_json({{"material", "metal"}, {"shape", {{"not", "sphere"}}}})), (Ids{"o1"}));
  EXPECT_EQ(filter_objects(s, Predicate{}), (Ids{"o1", "o2", "o3"}));
  EXPECT_TRUE(filter_objects(s, std::map<std::string, std::string>{{"color", "green"}}).empty());
  EXPECT_EQ(code_of([&] { filter_objects(s, std::map<std::string, std::string>{{"weight", "heavy"}}); }), Errc::UnknownAttribute);
}

TEST(Scene, RelationsAndTheirInverses) {
  const SceneGraph s = s1();
  EXPECT_EQ(related_objects(s, "o3", "left"), (Ids{"o1", "o2"}));
  EXPECT_EQ(related_objects(s, "o2", "left"), (Ids{"o1"}));
  EXPECT_EQ(related_objects(s, "o1", "right"), (Ids{"o2", "o3"}));
  EXPECT_TRUE(related_objects(s, "o1", "left").empty());
  EXPECT_TRUE(related_objects(s, "o1", "front").empty());
  EXPECT_EQ(code_of([&] { related_objects(s, "o1", "above"); }), Errc::UnknownRelation);
  EXPECT_EQ(code_of([&] { related_objects(s, "o9", "left"); }), Errc::UnknownObject);
}

TEST(Scene, SameAttributeAndQuery) {
  const SceneGraph s = s1();
  EXPECT_EQ(same_attribute(s, "o1", "size"), (Ids{"o3"}));
  EXPECT_EQ(same_attribute(s, "o1", "material"), (Ids{"o2"}));
  EXPECT_TRUE(same_attribute(s, "o1", "color").empty());
  EXPECT_EQ(query_attribute(s, "o2", "color"), "blue");
  EXPECT_EQ(code_of([&] { query_attribute(s, "o2", "weight"); }), Errc::UnknownAttribute);
  EXPECT_EQ(count_objects({"o1", "o2", "o1"}), 2u);
  EXPECT_EQ(count_objects({}), 0u);
}

TEST(Scene, InverseConflictsAreRejected) {
  EXPECT_EQ(code_of([] {
              parse_scene(R"({"objects":[{"id":"a","color":"red","material":"metal","shape":"cube","size":"small"},
                                         {"id":"b","color":"red","material":"metal","shape":"cube","size":"small"}],
                              "relations":{"left":{"a":["b"]},"right":{"a":["b"]}}})");
            }),
            Errc::InverseConflict);
  EXPECT_EQ(code_of([] {
              parse_scene(R"({"objects":[{"id":"a","color":"red","material":"metal","shape":"cube","size":"small"}],
                              "relations":{"front":{"a":["a"]}}})");
            }),
            Errc::InverseConflict);
}

TEST(Scene, SchemaErrors) {
  const auto pointer = [](const std::string& text) {
    try {
      parse_scene(text);
    } catch (const SchemaError& e) {
      return e.pointer();
    }
    return std::string("<no error>");
  };
  const std::string obj = R"({"id":"o1","color":"red","material":"metal","shape":"cube","size":"small"})";
  EXPECT_EQ(pointer(R"({"objects":[)" + obj + R"(],"relations":{"left":{"o1":["o9"]}}})"), "/relations/left/o1/0");
  EXPECT_EQ(pointer(R"({"objects":[)" + obj + R"(],"relations":{"above":{}}})"), "/relations/above");
  EXPECT_EQ(pointer(R"({"objects":[{"id":"o1","color":"pink","material":"metal","shape":"cube","size":"small"}]})"),
            "/objects/0/color");
  EXPECT_EQ(pointer(R"({"objects":[)" + obj + "," + obj + "]}"), "/objects/1/id");
  EXPECT_EQ(pointer(R"({"objects":[],"extra":1})"), "/extra");
  EXPECT_THROW(parse_scene("{"), JsonSyntaxError);
}

TEST(Scene, CanonicalJsonRoundTrips) {
  const SceneGraph s = s1();
  const Json j = scene_to_json(s);
  EXPECT_EQ(j["relations"].size(), 4u);
  EXPECT_EQ(scene_from_json(j), s);
  EXPECT_EQ(scene_to_json(scene_from_json(j)), j);
}

TEST(SceneProperty, FilterAgreesWithBruteForce) {
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 300; ++round) {
    const SceneGraph s = random_scene(rng);
    const Predicate p = random_predicate(rng);
    Ids expected;
    for (const auto& o : s.objects) {
      bool ok = true;
      for (const auto& [attr, c] : p) ok = ok && ((o.attribute(attr) == c.value) != c.negated);
      if (ok) expected.push_back(o.id);
    }
    EXPECT_EQ(filter_objects(s, p), expected);
    EXPECT_EQ(predicate_from_json(predicate_to_json(p)), p);
  }
}

TEST(SceneProperty, InverseClosure) {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 200; ++round) {
    SceneGraph s = random_scene(rng);
    // Random linear orders guarantee consistency.
    std::vector<std::string> lr;
    for (const auto& o : s.objects) lr.push_back(o.id);
    std::shuffle(lr.begin(), lr.end(), rng);
    for (std::size_t i = 0; i < lr.size(); ++i)
      for (std::size_t k = i + 1; k < lr.size(); ++k)
        if (rng() % 2) s.relations["left"][lr[k]].insert(lr[i]);
    complete_inverses(s);
    for (auto r : kRelations) {
      const std::string inv(inverse_relation(r));
      for (const auto& [key, members] : s.relations[std::string(r)])
        for (const auto& m : members) EXPECT_EQ(s.relations[inv][m].count(key), 1u);
    }
  }
}

TEST(SceneLlm, Classification) {
  EXPECT_EQ(parse_classification("This is a Judging question."), "judging");
  EXPECT_EQ(parse_classification("counting"), "counting");
  EXPECT_EQ(parse_classification("querying, not counting"), "querying");
  EXPECT_EQ(code_of([] { parse_classification("dunno"); }), Errc::UnclassifiableReply);
  ScriptedProvider p(std::vector<std::string>{"  QUERYING\n"});
  EXPECT_EQ(classify_question(p, "What color is the cube?"), "querying");
  EXPECT_EQ(p.stats().calls, 1u);
}

TEST(SceneLlm, Extraction) {
  const SceneGraph s = s1();
  EXPECT_EQ(parse_extraction(s, R"(Objects: ["o1","o2"])"), (Ids{"o1", "o2"}));
  EXPECT_EQ(parse_extraction(s, "[]"), Ids{});
  EXPECT_EQ(code_of([&] { parse_extraction(s, R"(["o9"])"); }), Errc::UnknownObject);
  EXPECT_EQ(code_of([&] { parse_extraction(s, "none"); }), Errc::UnparseableReply);
  EXPECT_EQ(code_of([&] { parse_extraction(s, "[1, 2]"); }), Errc::UnparseableReply);
  EXPECT_EQ(extraction_prompt(s, "q").rfind("Scene graph:\n", 0), 0u);
}

TEST(Builtins, RegistryContents) {
  ActionRegistry r = builtin_registry();
  EXPECT_EQ(r.size(), 8u);
  for (const char* name : {"filter", "relation", "checking", "query", "countObjects", "classifyQuestion", "extractObjects", "note"})
    EXPECT_NE(r.find(name), nullptr) << name;
  EXPECT_EQ(code_of([&] { register_action(r, "note", {}, [](const ActionCall&) { return Json(); }); }), Errc::DuplicateAction);
  EXPECT_TRUE(r.find("classifyQuestion")->uses_provider);
  EXPECT_FALSE(r.find("filter")->uses_provider);
}

TEST(Builtins, FilterActionRunsAgainstTheSceneInput) {
  const ActionRegistry r = builtin_registry();
  const ActionSpec spec{"filter", std::nullopt, {}};
  const Json inputs = {{"predicate", {{"size", "large"}}}, {"scene", scene_to_json(s1())}};
  const Belief b;
  EXPECT_EQ(r.find("filter")->impl({spec, inputs, b, nullptr}), Json({"o1", "o3"}));
  const Json count_inputs = {{"ids", {"o1", "o3", "o3"}}};
  EXPECT_EQ(r.find("countObjects")->impl({ActionSpec{"countObjects", std::nullopt, {}}, count_inputs, b, nullptr}), 2);
}
