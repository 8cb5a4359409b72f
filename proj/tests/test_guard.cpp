#include <gtest/gtest.h>

#include <random>
#include <string>

#include "smagent/belief.hpp"
#include "smagent/guard.hpp"

using namespace smagent;
using guard::CompareOp;
using guard::GuardExpr;
using guard::Operand;
using guard::Path;

namespace {

Operand path(std::initializer_list<std::string> segs) { return Operand{Path{segs}}; }
Operand lit(Json v) { return Operand{std::move(v)}; }

bool eval(const std::string& text, const Json& kv) {
  return guard::evaluate(guard::parse_guard(text), [&](const Path& p) { return guard::lookup_in(kv, p); });
}

}  // namespace

TEST(GuardParse, ComparisonWithQuotedString) {
  const GuardExpr e = guard::parse_guard("kv.question_type == 'counting'");
  EXPECT_EQ(e, GuardExpr::make_compare(path({"kv", "question_type"}), CompareOp::eq, lit("counting")));
}

TEST(GuardParse, AndBindsTighterThanOr) {
  const GuardExpr e = guard::parse_guard("a or b and c");
  const GuardExpr want = GuardExpr::make_or(
      {GuardExpr::make_truthy(path({"a"})),
       GuardExpr::make_and({GuardExpr::make_truthy(path({"b"})), GuardExpr::make_truthy(path({"c"}))})});
  EXPECT_EQ(e, want);
}

TEST(GuardParse, NotExistsAndParentheses) {
  const GuardExpr e = guard::parse_guard("not (exists answer or retries >= 3)");
  const GuardExpr want = GuardExpr::make_not(GuardExpr::make_or(
      {GuardExpr::make_exists(Path{{"answer"}}),
       GuardExpr::make_compare(path({"retries"}), CompareOp::ge, lit(3))}));
  EXPECT_EQ(e, want);
}

TEST(GuardParse, Literals) {
  EXPECT_EQ(guard::parse_guard("x == -2.5"), GuardExpr::make_compare(path({"x"}), CompareOp::eq, lit(-2.5)));
  EXPECT_EQ(guard::parse_guard("x != null"), GuardExpr::make_compare(path({"x"}), CompareOp::ne, lit(nullptr)));
  EXPECT_EQ(guard::parse_guard("flag == true"), GuardExpr::make_compare(path({"flag"}), CompareOp::eq, lit(true)));
  EXPECT_EQ(guard::parse_guard("s == \"a\\\"b\""), GuardExpr::make_compare(path({"s"}), CompareOp::eq, lit("a\"b")));
  EXPECT_EQ(guard::parse_guard("tags contains 'x'"),
            GuardExpr::make_compare(path({"tags"}), CompareOp::contains, lit("x")));
}

TEST(GuardParse, PathSegmentsMayBeIndicesOrKeywords) {
  EXPECT_EQ(guard::parse_guard("items.0.not == 1"),
            GuardExpr::make_compare(path({"items", "0", "not"}), CompareOp::eq, lit(1)));
}

TEST(GuardParse, ErrorsCarryPosition) {
  try {
    guard::parse_guard("a == ");
    FAIL() << "expected a syntax error";
  } catch (const GuardSyntaxError& e) {
    EXPECT_EQ(e.position(), 5u);
    EXPECT_FALSE(e.expected().empty());
  }
  EXPECT_THROW(guard::parse_guard(""), GuardSyntaxError);
  EXPECT_THROW(guard::parse_guard("(a"), GuardSyntaxError);
  EXPECT_THROW(guard::parse_guard("a b"), GuardSyntaxError);
  EXPECT_THROW(guard::parse_guard("'unterminated"), GuardSyntaxError);
  EXPECT_THROW(guard::parse_guard("a === b"), GuardSyntaxError);
  EXPECT_THROW(guard::parse_guard("and.x"), GuardSyntaxError);
}

TEST(GuardParse, DeepNestingIsRejectedNotCrashed) {
  std::string deep(100000, '(');
  EXPECT_THROW(guard::parse_guard(deep + "a"), GuardSyntaxError);
}

TEST(GuardParse, CanonicalTextRoundTrips) {
  for (const char* text : {"a or b and c", "not (a and b)", "x.y >= 2 and s == 'q\\'x'", "exists k or not v",
                           "(a or b) and (c or d)", "n == 1e3", "t contains \"line\\nbreak\""}) {
    const GuardExpr e = guard::parse_guard(text);
    EXPECT_EQ(guard::parse_guard(guard::to_string(e)), e) << text;
  }
}

TEST(GuardEval, AbsentPaths) {
  const Json kv = {{"retries", 1}};
  EXPECT_TRUE(eval("retries < 2", kv));
  EXPECT_FALSE(eval("exists answer", kv));
  EXPECT_FALSE(eval("answer", kv));
  EXPECT_FALSE(eval("answer == 1", kv));
  EXPECT_FALSE(eval("answer < 1", kv));
  EXPECT_TRUE(eval("answer != 1", kv));
}

TEST(GuardEval, Truthiness) {
  const Json kv = {{"z", 0}, {"e", ""}, {"f", false}, {"n", nullptr}, {"arr", Json::array()}};
  EXPECT_TRUE(eval("z", kv));
  EXPECT_FALSE(eval("e", kv));
  EXPECT_FALSE(eval("f", kv));
  EXPECT_FALSE(eval("n", kv));
  EXPECT_TRUE(eval("arr", kv));
}

TEST(GuardEval, OrderingAndContains) {
  const Json kv = {{"s", "abc"}, {"a", {1, 2}}, {"o", {{"k", 1}}}, {"x", 2.5}};
  EXPECT_TRUE(eval("s < 'abd'", kv));
  EXPECT_TRUE(eval("x > 2", kv));
  EXPECT_TRUE(eval("s contains 'bc'", kv));
  EXPECT_TRUE(eval("a contains 2", kv));
  EXPECT_FALSE(eval("a contains 3", kv));
  EXPECT_TRUE(eval("o contains 'k'", kv));
  EXPECT_TRUE(eval("a.1 == 2", kv));
}

TEST(GuardEval, TypeErrorsAreRuntimeErrors) {
  const Json kv = {{"s", "abc"}};
  EXPECT_NO_THROW(guard::parse_guard("s < 3"));
  try {
    eval("s < 3", kv);
    FAIL() << "expected a type error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::GuardTypeError);
  }
}

TEST(GuardEval, ShortCircuitSkipsTypeErrors) {
  const Json kv = {{"s", "abc"}};
  EXPECT_TRUE(eval("exists s or s < 3", kv));
  EXPECT_FALSE(eval("not exists s and s < 3", kv));
}

TEST(GuardEval, KvPrefixAliasesTheStore) {
  Belief b;
  b.kv_set("question_type", "counting");
  const auto look = [&](const Path& p) { return b.resolve(p); };
  EXPECT_TRUE(guard::evaluate(guard::parse_guard("kv.question_type == 'counting'"), look));
  EXPECT_TRUE(guard::evaluate(guard::parse_guard("question_type == 'counting'"), look));
  b.kv_set("kv", Json{{"question_type", "judging"}});
  EXPECT_TRUE(guard::evaluate(guard::parse_guard("kv.question_type == 'judging'"), look));
}

TEST(GuardFuzz, RandomTextNeverCrashes) {
  std::mt19937_64 rng(11);
  const std::string alphabet = "ab.0123()'\" =!<>andortexiscn_\\\n-+eE";
  for (int i = 0; i < 2000; ++i) {
    std::string text;
    const std::size_t len = rng() % 40;
    for (std::size_t k = 0; k < len; ++k) text += alphabet[rng() % alphabet.size()];
    try {
      const GuardExpr e = guard::parse_guard(text);
      EXPECT_EQ(guard::parse_guard(guard::to_string(e)), e) << text;
    } catch (const GuardSyntaxError&) {
    }
  }
}
