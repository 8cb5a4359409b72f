#pragma once

#include <memory>
#include <string>

#include "smagent/builtins.hpp"
#include "smagent/machine_json.hpp"
#include "smagent/scene.hpp"

namespace testing_support {

inline std::string fixture(const std::string& rel) { return std::string(SMAGENT_FIXTURES) + "/" + rel; }

inline smagent::StateMachine machine(const std::string& name) {
  return smagent::load_machine_file(fixture("machines/" + name + ".sm.json"));
}

inline std::shared_ptr<const smagent::StateMachine> shared_machine(const std::string& name) {
  return std::make_shared<const smagent::StateMachine>(machine(name));
}

inline smagent::scene::SceneGraph s1() {
  return smagent::scene::parse_scene(smagent::read_text_file(fixture("scenes/s1.json")));
}

inline std::shared_ptr<const smagent::ActionRegistry> qa_actions() {
  return std::make_shared<const smagent::ActionRegistry>(smagent::qa_registry());
}

}  // namespace testing_support
