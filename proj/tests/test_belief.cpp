#include <gtest/gtest.h>

#include <random>
#include <string>

#include "smagent/belief.hpp"

using namespace smagent;

namespace {

Belief sample() {
  Belief b({{Role::user, "How many cubes?"}});
  b.record_action({0, "note", Json::object(), "ready", Phase::entry, std::nullopt});
  b.record_transition({1, "Start", "QuestionClassification", "classify", Json::object()});
  b.record_action({1, "classifyQuestion", {{"question", "How many cubes?"}}, "counting", Phase::entry, std::nullopt});
  b.record_transition({2, "QuestionClassification", "ObjectExtraction", "count", {{"k", 1}}});
  return b;
}

}  // namespace

TEST(Belief, TrajectoryStepsMustBeConsecutive) {
  Belief b;
  EXPECT_THROW(b.record_transition({2, "A", "B", "e", Json::object()}), Error);
  b.record_transition({1, "A", "B", "e", Json::object()});
  EXPECT_EQ(b.current_state(), "B");
  EXPECT_THROW(b.record_transition({1, "B", "A", "e", Json::object()}), Error);
  EXPECT_THROW(b.record_action({2, "note", Json::object(), nullptr, Phase::entry, std::nullopt}), Error);
  EXPECT_NO_THROW(b.record_action({1, "note", Json::object(), nullptr, Phase::entry, std::nullopt}));
}

TEST(Belief, KvPathsAndIdentifiers) {
  Belief b;
  b.kv_set("scene", {{"objects", {{{"id", "o1"}}}}});
  EXPECT_EQ(b.kv_get("scene.objects.0.id"), Json("o1"));
  EXPECT_FALSE(b.kv_get("scene.objects.3.id"));
  EXPECT_FALSE(b.kv_get("missing"));
  EXPECT_EQ(b.resolve("kv.scene.objects.0.id"), Json("o1"));
  EXPECT_THROW(b.kv_set("not valid", 1), Error);
}

TEST(Belief, HistoryEntriesInStepOrder) {
  const auto lines = sample().history_entries();
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "step 0: entry action note({}) => \"ready\"");
  EXPECT_EQ(lines[1], "step 1: Start -> QuestionClassification on classify");
  EXPECT_EQ(lines[2], "step 1: entry action classifyQuestion({\"question\":\"How many cubes?\"}) => \"counting\"");
  EXPECT_EQ(lines[3], "step 2: QuestionClassification -> ObjectExtraction on count with {\"k\":1}");
}

TEST(Belief, RenderHistoryKeepsTheNewestSuffix) {
  const Belief b = sample();
  const auto lines = b.history_entries();
  EXPECT_EQ(b.render_history(100000), lines[0] + "\n" + lines[1] + "\n" + lines[2] + "\n" + lines[3]);
  const std::string last_two = lines[2] + "\n" + lines[3];
  EXPECT_EQ(b.render_history(estimate_tokens(last_two)), last_two);
  EXPECT_THROW(b.render_history(0), Error);
  EXPECT_EQ(Belief().render_history(5), "");
}

TEST(Belief, OversizedNewestEntryIsTruncatedWithMarker) {
  Belief b;
  b.record_transition({1, "A", "B", "e", {{"blob", std::string(400, 'x')}}});
  const std::string out = b.render_history(10);
  EXPECT_LE(estimate_tokens(out), 10u);
  EXPECT_EQ(out.substr(out.size() - kTruncationMarker.size()), kTruncationMarker);
  EXPECT_EQ(out.substr(0, 10), "step 1: A ");
}

TEST(Belief, TraceDocument) {
  Belief b = sample();
  b.kv_set("count", 1);
  b.record_policy({2, "rules", "count", 0});
  b.record_guard({2, "has_metal", true});
  const Json t = b.to_json();
  EXPECT_EQ(t["trajectory"].size(), 2u);
  EXPECT_EQ(t["trajectory"][1]["event_payload"], Json({{"k", 1}}));
  EXPECT_EQ(t["execution_log"][1]["phase"], "entry");
  EXPECT_EQ(t["kv"]["count"], 1);
  EXPECT_EQ(t["current_state"], "ObjectExtraction");
  EXPECT_EQ(t["task_context"][0]["text"], "How many cubes?");
  EXPECT_EQ(t["policy_log"][0]["stage"], "rules");
  EXPECT_EQ(t["guard_log"][0]["result"], true);
}

TEST(Belief, FailedActionsAreLoggedWithTheirError) {
  Belief b;
  b.record_action({0, "extractObjects", Json::object(), nullptr, Phase::entry, std::string("no array")});
  EXPECT_EQ(b.to_json()["execution_log"][0]["error"], "no array");
  EXPECT_EQ(b.history_entries()[0], "step 0: entry action extractObjects({}) => error: no array");
}

TEST(Belief, SlidingWindowMatchesBruteForce) {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 50; ++round) {
    Belief b;
    const std::size_t steps = rng() % 12;
    for (std::size_t s = 1; s <= steps; ++s) {
      b.record_transition({s, "A", "B", "e", {{"p", std::string(rng() % 60, 'y')}}});
      if (rng() % 2 == 0) b.record_action({s, "note", Json::object(), std::string(rng() % 30, 'z'), Phase::entry, std::nullopt});
    }
    const auto lines = b.history_entries();
    const std::size_t budget = 1 + rng() % 80;
    // Longest suffix whose joined text fits.
    std::string expected;
    for (std::size_t k = lines.size(); k > 0; --k) {
      std::string joined;
      for (std::size_t i = k - 1; i < lines.size(); ++i) joined += (i == k - 1 ? "" : "\n") + lines[i];
      if ((joined.size() + 3) / 4 > budget) break;
      expected = joined;
    }
    const std::string got = b.render_history(budget);
    if (!lines.empty() && expected.empty()) {
      EXPECT_EQ(got.substr(got.size() - kTruncationMarker.size()), kTruncationMarker);
    } else {
      EXPECT_EQ(got, expected);
    }
  }
}
