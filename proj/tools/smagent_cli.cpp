// Command-line front end: validate, dot, run, repl, bench.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "smagent/builtins.hpp"
#include "smagent/dot.hpp"
#include "smagent/engine.hpp"
#include "smagent/harness.hpp"
#include "smagent/http_provider.hpp"
#include "smagent/machine_json.hpp"
#include "smagent/policy.hpp"
#include "smagent/provider.hpp"
#include "smagent/scene.hpp"

namespace {

using namespace smagent;

struct Config {
  std::string machine;
  std::string rules;
  std::string provider;
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini";
  std::size_t max_transitions = 10;
  std::size_t history_budget = 3000;
  std::string trace;
  std::string scene;
  std::string question;
  std::string event;
  std::string payload;
  std::string dataset;
  std::uint64_t seed = 7;
  std::size_t scenes = 50;
  std::size_t questions = 3;
  std::string variant = "routing";
  std::string report;
  std::string write_dataset;
  std::size_t runs = 1;
  std::vector<std::string> known_actions;
};

std::shared_ptr<Provider> make_provider(const Config& cfg) {
  if (cfg.provider.empty()) return nullptr;
  if (cfg.provider == "http")
    return std::make_shared<HttpProvider>(HttpProviderConfig::from_env(cfg.base_url, cfg.model));
  const std::string prefix = "scripted:";
  if (cfg.provider.rfind(prefix, 0) == 0) {
    const std::string path = cfg.provider.substr(prefix.size());
    if (path.empty()) throw Error(Errc::InvalidArgument, "provider 'scripted:' needs a script file");
    return std::make_shared<ScriptedProvider>(parse_script(read_text_file(path)));
  }
  throw Error(Errc::InvalidArgument, "provider must be scripted:<file> or http, got '" + cfg.provider + "'");
}

std::shared_ptr<const ActionRegistry> registry() {
  return std::make_shared<const ActionRegistry>(qa_registry());
}

PolicyStack make_policy(const Config& cfg, bool have_provider) {
  PolicyStack stack;
  if (!cfg.rules.empty()) stack.push_back(PolicyStage::rule_stage(load_rules_file(cfg.rules)));
  if (have_provider) {
    LlmPolicyConfig llm;
    llm.task_description = cfg.question.empty() ? "Drive the state machine to an end state." : cfg.question;
    llm.history_token_budget = cfg.history_budget;
    stack.push_back(PolicyStage::llm_stage(llm));
  }
  return stack;
}

Belief seeded_belief(const Config& cfg) {
  Belief b;
  if (!cfg.question.empty()) {
    b.add_message(Role::user, cfg.question);
    b.kv_set("question", cfg.question);
  }
  if (!cfg.scene.empty()) b.kv_set("scene", scene::scene_to_json(scene::parse_scene(read_text_file(cfg.scene))));
  return b;
}

std::optional<EventInstance> initial_event(const Config& cfg) {
  if (cfg.event.empty()) {
    if (!cfg.payload.empty()) throw Error(Errc::InvalidArgument, "--payload needs --event");
    return std::nullopt;
  }
  EventInstance ev{cfg.event, Json::object()};
  if (!cfg.payload.empty()) {
    ev.payload = json_detail::parse_json_text(cfg.payload);
    if (!ev.payload.is_object()) throw Error(Errc::InvalidArgument, "--payload must be a JSON object");
  }
  return ev;
}

void write_trace(const Config& cfg, const RunResult& r) {
  if (cfg.trace.empty()) return;
  Json trace = r.belief.to_json();
  trace["status"] = std::string(to_string(r.status));
  if (!r.reason.empty()) trace["reason"] = r.reason;
  trace["output"] = r.output;
  trace["stats"] = {{"calls", r.stats.calls}, {"prompt_bytes", r.stats.prompt_bytes}, {"reply_bytes", r.stats.reply_bytes}};
  std::ofstream f(cfg.trace, std::ios::binary);
  f << trace.dump(2) << "\n";
  if (!f) throw Error(Errc::Io, "cannot write trace to " + cfg.trace);
}

void report_status(const RunResult& r) {
  std::cerr << "status: " << to_string(r.status) << "\n";
  std::cerr << "steps: " << r.transitions() << "\n";
  if (!r.reason.empty()) std::cerr << "reason: " << r.reason << "\n";
}

int cmd_validate(const Config& cfg) {
  const StateMachine sm = load_machine_file(cfg.machine);
  auto known = qa_registry().names();
  for (const auto& a : cfg.known_actions) known.insert(a);
  const ValidationReport report = validate_machine(sm, known);
  for (const auto& v : report.violations)
    std::cout << (v.is_warning() ? "warning: " : "error: ") << to_string(v.cls) << " " << v.subject << ": " << v.message << "\n";
  if (report.empty()) std::cout << "ok\n";
  return report.empty() ? 0 : 1;
}

int cmd_dot(const Config& cfg) {
  std::cout << export_dot(load_machine_file(cfg.machine));
  return 0;
}

std::unique_ptr<Agent> make_agent(const Config& cfg, std::shared_ptr<Provider>& provider) {
  provider = make_provider(cfg);
  auto machine = std::make_shared<const StateMachine>(load_machine_file(cfg.machine));
  RunLimits limits;
  limits.max_transitions = cfg.max_transitions;
  return std::make_unique<Agent>(machine, registry(), make_policy(cfg, provider != nullptr), provider.get(), limits,
                                 seeded_belief(cfg));
}

int cmd_run(const Config& cfg) {
  std::shared_ptr<Provider> provider;
  auto agent = make_agent(cfg, provider);
  const RunResult r = agent->run(initial_event(cfg));
  write_trace(cfg, r);
  std::cout << harness::answer_text(r.output) << "\n";
  report_status(r);
  return exit_code(r.status);
}

int cmd_repl(const Config& cfg) {
  std::shared_ptr<Provider> provider;
  auto agent = make_agent(cfg, provider);
  RunResult r = agent->run(initial_event(cfg));
  report_status(r);
  std::string line;
  while (r.status == RunStatus::Waiting) {
    std::cout << "[" << *agent->belief().current_state() << "]> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    std::istringstream in(line);
    std::string word;
    in >> word;
    if (word.empty()) continue;
    if (word == ":quit") {
      write_trace(cfg, r);
      return 0;
    }
    if (word == ":state") {
      std::cout << *agent->belief().current_state() << "\n";
      continue;
    }
    if (word == ":belief") {
      std::cout << agent->belief().to_json().dump(2) << "\n";
      continue;
    }
    if (word != "event") {
      std::cout << "error: expected 'event <name> [json]', ':state', ':belief' or ':quit'\n";
      continue;
    }
    EventInstance ev;
    in >> ev.name;
    std::string rest;
    std::getline(in, rest);
    if (ev.name.empty()) {
      std::cout << "error: event needs a name\n";
      continue;
    }
    if (rest.find_first_not_of(" \t") != std::string::npos) {
      try {
        ev.payload = json_detail::parse_json_text(rest);
      } catch (const Error& e) {
        std::cout << "error: " << e.what() << "\n";
        continue;
      }
      if (!ev.payload.is_object()) {
        std::cout << "error: payload must be a JSON object\n";
        continue;
      }
    }
    RunResult next = agent->run(ev);
    if (next.status == RunStatus::Failed && next.error_code == Errc::UnhandledEvent) {
      std::cout << "error: " << next.reason << "\n";
      continue;
    }
    r = std::move(next);
    report_status(r);
  }
  write_trace(cfg, r);
  std::cout << harness::answer_text(r.output) << "\n";
  return exit_code(r.status);
}

int cmd_bench(const Config& cfg) {
  using namespace harness;
  const Dataset ds = cfg.dataset.empty() ? generate_mini_clevr(cfg.seed, cfg.scenes, cfg.questions)
                                         : load_dataset(cfg.dataset);
  if (!cfg.write_dataset.empty()) write_dataset(ds, cfg.write_dataset);
  VariantSetup setup;
  setup.variant = variant_from(cfg.variant);
  setup.machine = std::make_shared<const StateMachine>(load_machine_file(cfg.machine));
  setup.registry = registry();
  if (!cfg.rules.empty()) setup.rules = load_rules_file(cfg.rules);
  setup.limits.max_transitions = cfg.max_transitions;
  setup.history_budget = cfg.history_budget;
  AgentFactory factory;
  if (cfg.provider.empty() || cfg.provider == "oracle") {
    factory = oracle_factory(setup);
  } else {
    factory = shared_provider_factory(setup, make_provider(cfg));
  }
  EvalOptions opts;
  opts.runs = cfg.runs;
  opts.limits = setup.limits;
  const EvalReport report = run_eval(factory, ds, opts);
  if (!cfg.report.empty()) {
    std::ofstream f(cfg.report, std::ios::binary);
    f << report.to_json().dump(2) << "\n";
    if (!f) throw Error(Errc::Io, "cannot write report to " + cfg.report);
  }
  std::cout << "variant               " << cfg.variant << "\n" << report.summary_table();
  return 0;
}

void add_run_options(CLI::App* cmd, Config& cfg) {
  cmd->add_option("--machine", cfg.machine, "machine JSON file")->required();
  cmd->add_option("--rules", cfg.rules, "rule file for a rule-based policy stage");
  cmd->add_option("--provider", cfg.provider, "scripted:<file> or http");
  cmd->add_option("--base-url", cfg.base_url, "chat-completions base URL");
  cmd->add_option("--model", cfg.model, "model name");
  cmd->add_option("--max-transitions", cfg.max_transitions, "transition budget")->check(CLI::PositiveNumber);
  cmd->add_option("--history-budget", cfg.history_budget, "history token budget")->check(CLI::PositiveNumber);
  cmd->add_option("--trace", cfg.trace, "write the belief trace here");
  cmd->add_option("--scene", cfg.scene, "scene graph JSON file, stored as kv.scene");
  cmd->add_option("--question", cfg.question, "task input, stored as kv.question");
  cmd->add_option("--event", cfg.event, "initial event name");
  cmd->add_option("--payload", cfg.payload, "JSON payload of the initial event");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run LLM workflows defined as hierarchical state machines"};
  app.require_subcommand(1);
  Config cfg;

  auto* validate = app.add_subcommand("validate", "check a machine definition");
  validate->add_option("--machine", cfg.machine, "machine JSON file")->required();
  validate->add_option("--known-action", cfg.known_actions, "extra action names to accept");

  auto* dot = app.add_subcommand("dot", "print a machine as Graphviz DOT");
  dot->add_option("--machine", cfg.machine, "machine JSON file")->required();

  auto* run = app.add_subcommand("run", "run an agent to completion");
  add_run_options(run, cfg);

  auto* repl = app.add_subcommand("repl", "run an agent and feed it events interactively");
  add_run_options(repl, cfg);

  auto* bench = app.add_subcommand("bench", "evaluate a machine design on a question dataset");
  bench->add_option("--machine", cfg.machine, "machine JSON file")->required();
  bench->add_option("--variant", cfg.variant, "routing, react or planning");
  bench->add_option("--rules", cfg.rules, "rule file for a rule-based policy stage");
  bench->add_option("--provider", cfg.provider, "oracle (default), scripted:<file> or http");
  bench->add_option("--base-url", cfg.base_url, "chat-completions base URL");
  bench->add_option("--model", cfg.model, "model name");
  bench->add_option("--max-transitions", cfg.max_transitions, "transition budget")->check(CLI::PositiveNumber);
  bench->add_option("--history-budget", cfg.history_budget, "history token budget")->check(CLI::PositiveNumber);
  bench->add_option("--dataset", cfg.dataset, "dataset JSONL; generated from --seed when absent");
  bench->add_option("--seed", cfg.seed, "generator seed");
  bench->add_option("--scenes", cfg.scenes, "generated scenes")->check(CLI::PositiveNumber);
  bench->add_option("--questions", cfg.questions, "questions per generated scene")->check(CLI::PositiveNumber);
  bench->add_option("--runs", cfg.runs, "repetitions per item")->check(CLI::PositiveNumber);
  bench->add_option("--report", cfg.report, "write the JSON report here");
  bench->add_option("--write-dataset", cfg.write_dataset, "save the dataset and its scenes in this directory");

  app.require_subcommand(1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (*validate) return cmd_validate(cfg);
    if (*dot) return cmd_dot(cfg);
    if (*run) return cmd_run(cfg);
    if (*repl) return cmd_repl(cfg);
    if (*bench) return cmd_bench(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
