#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>

#include "rdpkit/pdfa.hpp"
#include "rdpkit/rdp.hpp"

namespace rdpkit {

/// Either automaton kind stored in `rdpkit-automaton v1` files.
using Automaton = std::variant<Pdfa, PolicyTransducer>;

void write_automaton(std::ostream& out, const Pdfa& pdfa);
void write_automaton(std::ostream& out, const PolicyTransducer& policy);
std::string serialize_automaton(const Automaton& automaton);

/// Parses either kind. PDFA must be well-formed within 1e-6.
Automaton parse_automaton(std::istream& in);
Automaton parse_automaton(const std::string& text);

void save_automaton(const std::filesystem::path& path, const Automaton& automaton);
Automaton load_automaton(const std::filesystem::path& path);

/// Graphviz text. Nodes are emitted in state order; the initial state is
/// drawn as a double circle.
std::string export_dot(const Pdfa& pdfa);
std::string export_dot(const PolicyTransducer& policy);
std::string export_dot(const DynamicsTransducer& dynamics);
std::string export_dot(const Automaton& automaton);

}  // namespace rdpkit
