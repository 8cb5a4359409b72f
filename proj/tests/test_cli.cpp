#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "support.hpp"

using testing_support::fixture;
using Json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("smagent_cli_" + std::to_string(::getpid()) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome cli(const std::string& args, const std::string& input = "") {
    const fs::path in = dir_ / "stdin.txt";
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    std::ofstream(in, std::ios::binary) << input;
    const std::string cmd = quote(SMAGENT_CLI) + " " + args + " < " + quote(in) + " > " + quote(out) + " 2> " + quote(err);
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  std::string machine(const std::string& name) { return quote(fixture("machines/" + name + ".sm.json")); }
  std::string path(const std::string& name) { return (dir_ / name).string(); }

  fs::path dir_;
};

std::string replay_args() {
  return "--rules " + quote(fixture("rules/routing.rules.json")) + " --provider " +
         quote("scripted:" + fixture("scripts/routing_replay.script.json")) + " --scene " + quote(fixture("scenes/s1.json")) +
         " --question " + quote("How many metal cubes are there?");
}

}  // namespace

TEST_F(Cli, ValidateReportsViolations) {
  const Outcome ok = cli("validate --machine " + machine("routing"));
  EXPECT_EQ(ok.code, 0);
  EXPECT_EQ(ok.out, "ok\n");
  const Outcome bad = cli("validate --machine " + machine("multiple_start"));
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("error: MultipleStart"), std::string::npos);
  const Outcome stubs = cli("validate --machine " + machine("test_driven"));
  EXPECT_EQ(stubs.code, 1);
  EXPECT_NE(stubs.out.find("UnknownAction"), std::string::npos);
  const Outcome known = cli("validate --machine " + machine("test_driven") +
                            " --known-action generateTests --known-action generateFunction --known-action runTests"
                            " --known-action selectBest");
  EXPECT_EQ(known.code, 0) << known.out;
  const Outcome missing = cli("validate --machine " + quote(path("absent.json")));
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("error:"), std::string::npos);
}

TEST_F(Cli, DotExport) {
  const Outcome r = cli("dot --machine " + machine("h3"));
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("digraph", 0), 0u);
  EXPECT_NE(r.out.find("cluster_Mid"), std::string::npos);
}

TEST_F(Cli, RunWritesTraceAndAnswer) {
  const Outcome r = cli("run --machine " + machine("routing") + " " + replay_args() + " --trace " + quote(path("trace.json")));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "1\n");
  EXPECT_NE(r.err.find("status: Completed"), std::string::npos);
  EXPECT_NE(r.err.find("steps: 3"), std::string::npos);
  const Json trace = Json::parse(slurp(path("trace.json")));
  EXPECT_EQ(trace["trajectory"].size(), 3u);
  EXPECT_EQ(trace["status"], "Completed");
  EXPECT_EQ(trace["stats"]["calls"], 2);
  EXPECT_EQ(trace["kv"]["count"], 1);
  for (const char* key : {"task_context", "trajectory", "execution_log", "kv", "current_state"})
    EXPECT_TRUE(trace.contains(key)) << key;
}

TEST_F(Cli, ExitCodesFollowRunStatus) {
  const Outcome budget = cli("run --machine " + machine("cyclic") + " --max-transitions 4 --trace " + quote(path("t.json")));
  EXPECT_EQ(budget.code, 3);
  EXPECT_EQ(Json::parse(slurp(path("t.json")))["trajectory"].size(), 4u);
  EXPECT_NE(budget.err.find("steps: 4"), std::string::npos);
  EXPECT_EQ(cli("run --machine " + machine("cyclic")).code, 3);
  EXPECT_EQ(cli("run --machine " + machine("waiting")).code, 2);
  EXPECT_EQ(cli("run --machine " + machine("waiting") + " --event go").code, 0);
  EXPECT_EQ(cli("run --machine " + machine("approval")).code, 2);
  const Outcome approved =
      cli("run --machine " + machine("linear5") + " --trace " + quote(path("l.json")));
  EXPECT_EQ(approved.code, 0);
  EXPECT_EQ(approved.out, "s5\n");
}

TEST_F(Cli, FailuresExitOne) {
  const Outcome bogus = cli("run --machine " + machine("routing") + " --provider bogus --trace " + quote(path("x.json")));
  EXPECT_EQ(bogus.code, 1);
  EXPECT_FALSE(fs::exists(path("x.json")));
  const Outcome bad_script =
      cli("run --machine " + machine("routing") + " --provider " + quote("scripted:" + fixture("scripts/bad_provider.script.json")));
  EXPECT_EQ(bad_script.code, 1);
  std::ofstream(path("short.json")) << R"(["judging"])";
  const Outcome exhausted = cli("run --machine " + machine("routing") + " --rules " + quote(fixture("rules/routing.rules.json")) +
                                " --provider " + quote("scripted:" + path("short.json")) + " --scene " +
                                quote(fixture("scenes/s1.json")) + " --question " + quote("Is there a cube?"));
  EXPECT_EQ(exhausted.code, 1);
  EXPECT_NE(exhausted.err.find("status: Failed"), std::string::npos);
  EXPECT_EQ(cli("run").code, 1);
  EXPECT_EQ(cli("run --machine " + machine("waiting") + " --event go --payload '{not json'").code, 1);
  EXPECT_EQ(cli("run --machine " + machine("waiting") + " --payload '{}'").code, 1);
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("run --help").code, 0);
}

TEST_F(Cli, ReplDrivesExternalEvents) {
  const Outcome quit = cli("repl --machine " + machine("approval"), ":state\n:quit\n");
  EXPECT_EQ(quit.code, 0);
  EXPECT_NE(quit.out.find("Review\n"), std::string::npos);

  const Outcome approved = cli("repl --machine " + machine("approval") + " --trace " + quote(path("r.json")),
                               "event approve {not json\n"
                               "event fly\n"
                               "nonsense\n"
                               "event approve {\"text\": \"ship it\"}\n");
  EXPECT_EQ(approved.code, 0) << approved.out << approved.err;
  EXPECT_NE(approved.out.find("error:"), std::string::npos);
  EXPECT_NE(approved.out.find("ship it"), std::string::npos);
  const Json trace = Json::parse(slurp(path("r.json")));
  EXPECT_EQ(trace["kv"]["verdict"], "ship it");
  EXPECT_EQ(trace["trajectory"].size(), 2u);

  const Outcome eof = cli("repl --machine " + machine("waiting"), "");
  EXPECT_EQ(eof.code, 2);
}

TEST_F(Cli, BenchWithOracleScripts) {
  const Outcome r = cli("bench --machine " + machine("planning") + " --variant planning --seed 3 --scenes 10 --questions 3 --report " +
                        quote(path("report.json")) + " --write-dataset " + quote(path("ds")));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("exact match accuracy"), std::string::npos);
  const Json report = Json::parse(slurp(path("report.json")));
  EXPECT_EQ(report["n"], 30);
  EXPECT_DOUBLE_EQ(report["exact_match_accuracy"].get<double>(), 1.0);
  ASSERT_TRUE(fs::exists(path("ds/dataset.jsonl")));
  const Outcome again = cli("bench --machine " + machine("planning") + " --variant planning --dataset " +
                            quote(path("ds/dataset.jsonl")) + " --report " + quote(path("report2.json")));
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(Json::parse(slurp(path("report2.json")))["exact_match_accuracy"], report["exact_match_accuracy"]);
  EXPECT_EQ(cli("bench --machine " + machine("routing") + " --variant nope").code, 1);
}
