#include "rdpkit/automaton_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "text_io.hpp"

namespace rdpkit {

using text::expect_list;
using text::expect_value;
using text::format_double;
using text::LineReader;
using text::make_alphabet;
using text::parse_number;
using text::parse_probability;

namespace {

void write_list(std::ostream& out, const char* key, const Alphabet& alphabet) {
  out << key;
  for (const auto& t : alphabet.tokens()) out << ' ' << t;
  out << '\n';
}

/// Escapes a token for use inside a quoted DOT label.
std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

/// Wraps an already escaped label in quotes.
std::string quote(const std::string& label) { return '"' + label + '"'; }

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void dot_node(std::ostream& out, StateId q, StateId initial, const std::string& label) {
  out << "  q" << q << " [shape=" << (q == initial ? "doublecircle" : "circle")
      << ", label=" << quote(label) << "];\n";
}

}  // namespace

void write_automaton(std::ostream& out, const Pdfa& pdfa) {
  out << "rdpkit-automaton v1\nkind pdfa\n";
  out << "states " << pdfa.num_states() << '\n';
  out << "initial " << pdfa.initial() << '\n';
  write_list(out, "alphabet", pdfa.alphabet());
  const auto& sigma = pdfa.alphabet();
  for (StateId q = 0; q < pdfa.num_states(); ++q) {
    for (SymbolId s = 0; s < sigma.size(); ++s) {
      const StateId t = pdfa.next(q, s);
      if (t != kNoState) out << "trans " << q << ' ' << sigma.token(s) << " -> " << t << '\n';
    }
  }
  for (StateId q = 0; q < pdfa.num_states(); ++q) {
    for (SymbolId s = 0; s < sigma.size(); ++s) {
      const double e = pdfa.emission(q, s);
      if (e != 0.0) out << "emit " << q << ' ' << sigma.token(s) << ' ' << format_double(e) << '\n';
    }
    out << "stop " << q << ' ' << format_double(pdfa.stop_probability(q)) << '\n';
  }
  out << "end\n";
}

void write_automaton(std::ostream& out, const PolicyTransducer& policy) {
  out << "rdpkit-automaton v1\nkind policy\n";
  out << "states " << policy.num_states() << '\n';
  out << "initial " << policy.initial() << '\n';
  write_list(out, "inputs", policy.observations());
  write_list(out, "outputs", policy.actions());
  const auto& obs = policy.observations();
  for (StateId q = 0; q < policy.num_states(); ++q) {
    for (SymbolId s = 0; s < obs.size(); ++s) {
      const StateId t = policy.machine().next(q, s);
      if (t != kNoState) out << "trans " << q << ' ' << obs.token(s) << " -> " << t << '\n';
    }
  }
  for (StateId q = 0; q < policy.num_states(); ++q) {
    out << "output " << q << ' ' << policy.actions().token(policy.action(q)) << '\n';
  }
  out << "end\n";
}

std::string serialize_automaton(const Automaton& automaton) {
  std::ostringstream out;
  std::visit([&](const auto& a) { write_automaton(out, a); }, automaton);
  return out.str();
}

Automaton parse_automaton(std::istream& in) {
  LineReader reader(in);
  std::vector<std::string> words;
  if (!reader.next(words) || words.size() != 2 || words[0] != "rdpkit-automaton" ||
      words[1] != "v1") {
    reader.fail("expected header 'rdpkit-automaton v1'");
  }
  const std::string kind = expect_value(reader, "kind");
  if (kind != "pdfa" && kind != "policy") reader.fail("unknown automaton kind '" + kind + "'");
  const auto n = parse_number<std::size_t>(reader, expect_value(reader, "states"), "state count");
  if (n == 0) reader.fail("state count must be positive");
  const auto initial = parse_number<StateId>(reader, expect_value(reader, "initial"), "initial state");
  if (initial >= n) reader.fail("initial state out of range");

  Alphabet inputs, outputs;
  if (kind == "pdfa") {
    inputs = make_alphabet(reader, expect_list(reader, "alphabet"), "alphabet");
  } else {
    inputs = make_alphabet(reader, expect_list(reader, "inputs"), "inputs");
    outputs = make_alphabet(reader, expect_list(reader, "outputs"), "outputs");
    if (outputs.empty()) reader.fail("policy needs at least one output action");
  }

  auto parse_state = [&](const std::string& t) {
    const auto q = parse_number<StateId>(reader, t, "state");
    if (q >= n) reader.fail("state " + t + " out of range");
    return q;
  };
  auto lookup = [&](const Alphabet& alphabet, const std::string& token) {
    auto id = alphabet.find(token);
    if (!id) reader.fail("unknown symbol '" + token + "'");
    return *id;
  };

  const std::size_t sigma = inputs.size();
  std::vector<StateId> transitions(n * sigma, kNoState);
  std::vector<double> emissions(kind == "pdfa" ? n * (sigma + 1) : 0, 0.0);
  std::vector<SymbolId> actions(n, 0);
  std::vector<bool> has_output(n, false);
  bool ended = false;
  while (reader.next(words)) {
    const std::string& key = words[0];
    if (key == "end" && words.size() == 1) {
      ended = true;
      break;
    }
    if (key == "trans" && words.size() == 5 && words[3] == "->") {
      const StateId q = parse_state(words[1]);
      StateId& slot = transitions[q * sigma + lookup(inputs, words[2])];
      if (slot != kNoState) reader.fail("duplicate transition");
      slot = parse_state(words[4]);
    } else if (kind == "pdfa" && key == "emit" && words.size() == 4) {
      const StateId q = parse_state(words[1]);
      emissions[q * (sigma + 1) + lookup(inputs, words[2])] = parse_probability(reader, words[3]);
    } else if (kind == "pdfa" && key == "stop" && words.size() == 3) {
      emissions[parse_state(words[1]) * (sigma + 1) + sigma] = parse_probability(reader, words[2]);
    } else if (kind == "policy" && key == "output" && words.size() == 3) {
      const StateId q = parse_state(words[1]);
      if (has_output[q]) reader.fail("duplicate output for state " + words[1]);
      actions[q] = lookup(outputs, words[2]);
      has_output[q] = true;
    } else {
      reader.fail("malformed line starting with '" + key + "'");
    }
  }
  if (!ended) reader.fail("unexpected end of file; missing 'end' (truncated?)");
  if (reader.next(words)) reader.fail("content after 'end'");

  try {
    if (kind == "pdfa") {
      Pdfa pdfa(std::move(inputs), initial, std::move(transitions), std::move(emissions));
      WellFormedReport report = pdfa_well_formed(pdfa, 1e-6);
      if (!report.ok) throw Error("malformed PDFA: " + report.violations.front());
      return pdfa;
    }
    for (std::size_t q = 0; q < n; ++q) {
      if (!has_output[q]) throw Error("state " + std::to_string(q) + " has no output");
    }
    return PolicyTransducer(
        Transducer<SymbolId>(std::move(inputs), initial, std::move(transitions), std::move(actions)),
        std::move(outputs));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(reader.line(), e.what());
  }
}

Automaton parse_automaton(const std::string& text) {
  std::istringstream in(text);
  return parse_automaton(in);
}

void save_automaton(const std::filesystem::path& path, const Automaton& automaton) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << serialize_automaton(automaton);
  if (!out) throw Error("failed writing " + path.string());
}

Automaton load_automaton(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_automaton(in);
}

std::string export_dot(const Pdfa& pdfa) {
  std::ostringstream out;
  out << "digraph pdfa {\n  rankdir=LR;\n";
  for (StateId q = 0; q < pdfa.num_states(); ++q) {
    dot_node(out, q, pdfa.initial(), "q" + std::to_string(q) + "\\nstop " + fixed4(pdfa.stop_probability(q)));
  }
  for (StateId q = 0; q < pdfa.num_states(); ++q) {
    for (SymbolId s = 0; s < pdfa.alphabet().size(); ++s) {
      const StateId t = pdfa.next(q, s);
      if (t == kNoState) continue;
      out << "  q" << q << " -> q" << t << " [label="
          << quote(escape(pdfa.alphabet().token(s)) + " " + fixed4(pdfa.emission(q, s))) << "];\n";
    }
  }
  out << "}\n";
  return out.str();
}

std::string export_dot(const PolicyTransducer& policy) {
  std::ostringstream out;
  out << "digraph policy {\n  rankdir=LR;\n";
  for (StateId q = 0; q < policy.num_states(); ++q) {
    dot_node(out, q, policy.initial(),
             "q" + std::to_string(q) + "\\n" + escape(policy.actions().token(policy.action(q))));
  }
  for (StateId q = 0; q < policy.num_states(); ++q) {
    for (SymbolId s = 0; s < policy.observations().size(); ++s) {
      const StateId t = policy.machine().next(q, s);
      if (t == kNoState) continue;
      out << "  q" << q << " -> q" << t << " [label=" << quote(escape(policy.observations().token(s)))
          << "];\n";
    }
  }
  out << "}\n";
  return out.str();
}

std::string export_dot(const DynamicsTransducer& dynamics) {
  std::ostringstream out;
  out << "digraph dynamics {\n  rankdir=LR;\n";
  for (StateId q = 0; q < dynamics.num_states(); ++q) {
    dot_node(out, q, dynamics.initial(), "q" + std::to_string(q));
  }
  for (StateId q = 0; q < dynamics.num_states(); ++q) {
    for (SymbolId s = 0; s < dynamics.inputs().size(); ++s) {
      const StateId t = dynamics.next(q, s);
      if (t == kNoState) continue;
      out << "  q" << q << " -> q" << t << " [label=" << quote(escape(dynamics.inputs().token(s))) << "];\n";
    }
  }
  out << "}\n";
  return out.str();
}

std::string export_dot(const Automaton& automaton) {
  return std::visit([](const auto& a) { return export_dot(a); }, automaton);
}

}  // namespace rdpkit
