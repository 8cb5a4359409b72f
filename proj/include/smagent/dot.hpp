#pragma once

#include <string>
#include <string_view>

#include "smagent/machine.hpp"

namespace smagent {

namespace dot_detail {

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

inline void write_state(std::string& out, const State& s, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  if (!s.is_composite()) {
    out += pad + quote(s.name);
    if (s.has_tag(Tag::end)) out += " [shape=doublecircle]";
    out += ";\n";
    return;
  }
  out += pad + "subgraph " + quote("cluster_" + s.name) + " {\n";
  out += pad + "  label=" + quote(s.name) + ";\n";
  // Edges to and from the composite attach to this anchor node.
  out += pad + "  " + quote(s.name) + " [shape=box, style=dashed";
  if (s.has_tag(Tag::end)) out += ", peripheries=2";
  out += "];\n";
  for (const auto& c : s.substates) write_state(out, c, indent + 1);
  out += pad + "}\n";
}

}  // namespace dot_detail

/// Graphviz digraph: composites become clusters, the start state gets an
/// incoming edge from a point node, end states are double circles, and edges
/// are labelled "event [guard]".
inline std::string export_dot(const StateMachine& sm) {
  using dot_detail::quote;
  std::string out = "digraph " + quote(sm.name) + " {\n";
  out += "  rankdir=LR;\n";
  out += "  node [shape=box, style=rounded];\n";
  out += "  \"__start\" [shape=point];\n";
  for (const auto& s : sm.states) dot_detail::write_state(out, s, 1);
  for (const auto& s : sm.states)
    if (s.has_tag(Tag::start)) out += "  \"__start\" -> " + quote(s.name) + ";\n";
  for (const auto& t : sm.transitions) {
    std::string label = t.event;
    if (t.guard) label += " [" + t.guard->text() + "]";
    out += "  " + quote(t.source) + " -> " + quote(t.target) + " [label=" + quote(label);
    if (t.trigger == Trigger::external) out += ", style=dashed";
    out += "];\n";
  }
  out += "}\n";
  return out;
}

}  // namespace smagent
