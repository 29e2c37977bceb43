#include "rdpkit/environments.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "text_io.hpp"

namespace rdpkit {

using text::LineReader;
using text::expect_list;
using text::expect_value;
using text::format_double;
using text::make_alphabet;
using text::parse_number;
using text::parse_probability;

namespace {

bool open_unit(double p) { return p > 0.0 && p < 1.0; }

}  // namespace

Rdp make_grid_rdp(const GridSpec& spec) {
  const std::size_t m = spec.m;
  if (m < 1) throw Error("grid: m must be at least 1");
  if (spec.p0.size() != m || spec.p1.size() != m) {
    throw Error("grid: p0 and p1 need exactly m = " + std::to_string(m) + " entries");
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (!open_unit(spec.p0[j]) || !open_unit(spec.p1[j])) {
      throw Error("grid: enemy probabilities of column " + std::to_string(j) + " must lie in (0,1)");
    }
  }

  std::vector<std::string> obs_tokens;
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t j = 0; j < m; ++j) {
      const std::string base = std::to_string(k) + "_" + std::to_string(j) + "_";
      obs_tokens.push_back(base + "enemy");
      obs_tokens.push_back(base + "clear");
    }
  }
  Alphabet observations(obs_tokens);
  auto obs_id = [&](std::size_t k, std::size_t j, bool enemy) {
    return static_cast<SymbolId>((k * m + j) * 2 + (enemy ? 0 : 1));
  };
  auto state = [](std::size_t i, std::size_t b) { return static_cast<StateId>(2 * i + b); };

  const std::size_t n = 2 * m;
  std::vector<StateId> transitions(n * observations.size(), kNoState);
  std::vector<ActionTable> outputs(n, ActionTable(2));
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = (i + 1) % m;
    for (std::size_t b = 0; b < 2; ++b) {
      const StateId q = state(i, b);
      const double p = (b == 0 ? spec.p0 : spec.p1)[j];
      for (std::size_t k = 0; k < 2; ++k) {
        transitions[q * observations.size() + obs_id(k, j, true)] = state(j, 1 - b);
        transitions[q * observations.size() + obs_id(k, j, false)] = state(j, b);
        // Row k is entered by action a_k; the enemy is in row 0 with probability p.
        const double enemy = k == 0 ? p : 1.0 - p;
        outputs[q][k] = {{obs_id(k, j, true), 0, enemy}, {obs_id(k, j, false), 1, 1.0 - enemy}};
      }
    }
  }
  DynamicsTransducer dynamics(observations, state(m - 1, 0), std::move(transitions),
                              std::move(outputs));
  return Rdp(Alphabet({"a0", "a1"}), observations, Alphabet({"0", "1"}), spec.gamma,
             std::move(dynamics));
}

Rdp make_chain_rdp(std::size_t n, std::size_t good_action, double gamma, bool with_ended,
                   std::size_t num_actions) {
  if (n < 1) throw Error("chain: length must be at least 1");
  if (num_actions < 1) throw Error("chain: needs at least one action");
  if (good_action >= num_actions) throw Error("chain: good action out of range");

  std::vector<std::string> actions;
  for (std::size_t a = 0; a < num_actions; ++a) actions.push_back("a" + std::to_string(a));
  std::vector<std::string> obs_tokens;
  for (std::size_t j = 1; j <= n; ++j) obs_tokens.push_back("s" + std::to_string(j));
  if (with_ended) obs_tokens.push_back("ended");
  Alphabet observations(obs_tokens);
  const std::size_t sigma = observations.size();

  // q_j for j = 0..n, plus the absorbing sink when requested.
  const std::size_t n_states = n + 1 + (with_ended ? 1 : 0);
  const StateId sink = static_cast<StateId>(n + 1);
  const SymbolId ended = static_cast<SymbolId>(n);
  std::vector<StateId> transitions(n_states * sigma, kNoState);
  std::vector<ActionTable> outputs(n_states, ActionTable(num_actions));
  for (StateId q = 0; q <= n; ++q) {
    for (SymbolId s = 0; s < n; ++s) transitions[q * sigma + s] = s + 1;
    if (with_ended) transitions[q * sigma + ended] = sink;
    const std::size_t j = q == 0 ? 1 : q;
    for (std::size_t a = 0; a < num_actions; ++a) {
      if (j == n) {
        outputs[q][a] = {{static_cast<SymbolId>(n - 1), a == good_action ? 1u : 0u, 1.0}};
      } else if (with_ended) {
        outputs[q][a] = {{static_cast<SymbolId>(j), 0, 0.5}, {ended, 0, 0.5}};
      } else {
        outputs[q][a] = {{static_cast<SymbolId>(j), 0, 1.0}};
      }
    }
  }
  if (with_ended) {
    transitions[sink * sigma + ended] = sink;
    for (std::size_t a = 0; a < num_actions; ++a) outputs[sink][a] = {{ended, 0, 1.0}};
  }
  DynamicsTransducer dynamics(observations, 0, std::move(transitions), std::move(outputs));
  return Rdp(Alphabet(actions), observations, Alphabet({"0", "1"}), gamma, std::move(dynamics));
}

Rdp make_parity_rdp(std::size_t m, std::uint64_t subset, double noise, double gamma) {
  if (m < 1 || m > 63) throw Error("parity: bit count must lie in [1, 63]");
  if (!(noise >= 0.0 && noise < 0.5)) throw Error("parity: noise must lie in [0, 0.5)");
  if (subset >> m) throw Error("parity: subset selects bits beyond m");

  Alphabet observations({"0", "1"});
  const std::size_t n = 2 * m + 2;
  const StateId terminal = static_cast<StateId>(2 * m + 1);
  auto bit_state = [](std::size_t i, std::size_t b) { return static_cast<StateId>(1 + 2 * (i - 1) + b); };
  auto selected = [&](std::size_t i) { return ((subset >> (i - 1)) & 1u) != 0; };

  std::vector<StateId> transitions(n * 2, kNoState);
  std::vector<ActionTable> outputs(n, ActionTable(2));
  const ActionTable uniform_bit(2, {{0, 0, 0.5}, {1, 0, 0.5}});

  // q0 and q_i^b for i < m observe bit x_{i+1}.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t b = 0; b < (i == 0 ? 1u : 2u); ++b) {
      const StateId q = i == 0 ? 0 : bit_state(i, b);
      for (std::size_t x = 0; x < 2; ++x) {
        const std::size_t parity = b ^ (selected(i + 1) ? x : 0);
        transitions[q * 2 + x] = bit_state(i + 1, parity);
      }
      outputs[q] = uniform_bit;
    }
  }
  for (std::size_t b = 0; b < 2; ++b) {
    const StateId q = bit_state(m, b);
    transitions[q * 2 + 0] = terminal;
    transitions[q * 2 + 1] = terminal;
    for (SymbolId a = 0; a < 2; ++a) {
      auto& row = outputs[q][a];
      const SymbolId flipped = static_cast<SymbolId>(1 - b);
      row.push_back({static_cast<SymbolId>(b), a == b ? 1u : 0u, 1.0 - noise});
      if (noise > 0.0) row.push_back({flipped, a == flipped ? 1u : 0u, noise});
    }
  }
  transitions[terminal * 2 + 0] = terminal;
  outputs[terminal] = ActionTable(2, {{0, 0, 1.0}});

  DynamicsTransducer dynamics(observations, 0, std::move(transitions), std::move(outputs));
  return Rdp(Alphabet({"a0", "a1"}), observations, Alphabet({"0", "1"}), gamma,
             std::move(dynamics));
}

Rdp make_mab_rdp(const std::vector<double>& arm_probs, double gamma) {
  if (arm_probs.empty()) throw Error("bandit: needs at least one arm");
  std::vector<std::string> actions;
  ActionTable table;
  for (std::size_t i = 0; i < arm_probs.size(); ++i) {
    const double p = arm_probs[i];
    if (!(p >= 0.0 && p <= 1.0)) throw Error("bandit: arm " + std::to_string(i) + " probability out of [0,1]");
    actions.push_back("a" + std::to_string(i));
    std::vector<Outcome> row;
    if (p > 0.0) row.push_back({1, 1, p});
    if (p < 1.0) row.push_back({2, 0, 1.0 - p});
    table.push_back(std::move(row));
  }
  Alphabet observations({"s0", "s+", "s-"});
  DynamicsTransducer dynamics(observations, 0, {0, 0, 0}, {table});
  return Rdp(Alphabet(actions), observations, Alphabet({"0", "1"}), gamma, std::move(dynamics));
}

// ---------------------------------------------------------------------------
// rdpkit-rdp v1

void write_rdp(std::ostream& out, const Rdp& rdp) {
  auto list = [&](const char* key, const Alphabet& alphabet) {
    out << key;
    for (const auto& t : alphabet.tokens()) out << ' ' << t;
    out << '\n';
  };
  out << "rdpkit-rdp v1\n";
  list("actions", rdp.actions());
  list("observations", rdp.observations());
  list("rewards", rdp.rewards());
  out << "gamma " << format_double(rdp.gamma()) << '\n';
  out << "states " << rdp.num_states() << '\n';
  out << "initial " << rdp.dynamics().initial() << '\n';
  const auto& obs = rdp.observations();
  for (StateId q = 0; q < rdp.num_states(); ++q) {
    for (SymbolId s = 0; s < obs.size(); ++s) {
      const StateId t = rdp.dynamics().next(q, s);
      if (t != kNoState) out << q << ' ' << obs.token(s) << " -> " << t << '\n';
    }
  }
  for (StateId q = 0; q < rdp.num_states(); ++q) {
    for (SymbolId a = 0; a < rdp.actions().size(); ++a) {
      for (const Outcome& o : rdp.outcomes(q, a)) {
        out << q << ' ' << rdp.actions().token(a) << ' ' << obs.token(o.observation) << ' '
            << rdp.rewards().token(o.reward) << ' ' << format_double(o.probability) << '\n';
      }
    }
  }
  out << "end\n";
}

std::string serialize_rdp(const Rdp& rdp) {
  std::ostringstream out;
  write_rdp(out, rdp);
  return out.str();
}

Rdp parse_rdp(std::istream& in) {
  LineReader reader(in);
  std::vector<std::string> words;
  if (!reader.next(words) || words.size() != 2 || words[0] != "rdpkit-rdp" || words[1] != "v1") {
    reader.fail("expected header 'rdpkit-rdp v1'");
  }
  Alphabet actions = make_alphabet(reader, expect_list(reader, "actions"), "actions");
  Alphabet observations = make_alphabet(reader, expect_list(reader, "observations"), "observations");
  Alphabet rewards = make_alphabet(reader, expect_list(reader, "rewards"), "rewards");
  for (const auto& r : rewards.tokens()) {
    try {
      parse_reward(r);
    } catch (const Error& e) {
      reader.fail(e.what());
    }
  }
  const double gamma = parse_probability(reader, expect_value(reader, "gamma"));
  const auto n = parse_number<std::size_t>(reader, expect_value(reader, "states"), "state count");
  if (n == 0) reader.fail("state count must be positive");
  const auto initial = parse_number<StateId>(reader, expect_value(reader, "initial"), "initial state");
  if (initial >= n) reader.fail("initial state out of range");

  auto parse_state = [&](const std::string& text) {
    const auto q = parse_number<StateId>(reader, text, "state");
    if (q >= n) reader.fail("state " + text + " out of range");
    return q;
  };
  auto lookup = [&](const Alphabet& alphabet, const std::string& token, const char* what) {
    auto id = alphabet.find(token);
    if (!id) reader.fail(std::string("unknown ") + what + " '" + token + "'");
    return *id;
  };

  std::vector<StateId> transitions(n * observations.size(), kNoState);
  std::vector<ActionTable> outputs(n, ActionTable(actions.size()));
  std::map<std::pair<StateId, SymbolId>, std::size_t> first_line;
  bool ended = false;
  while (reader.next(words)) {
    if (words.size() == 1 && words[0] == "end") {
      ended = true;
      break;
    }
    if (words.size() == 4 && words[2] == "->") {
      const StateId q = parse_state(words[0]);
      const SymbolId s = lookup(observations, words[1], "observation");
      StateId& slot = transitions[q * observations.size() + s];
      if (slot != kNoState) reader.fail("duplicate transition from state " + words[0] + " on " + words[1]);
      slot = parse_state(words[3]);
    } else if (words.size() == 5) {
      const StateId q = parse_state(words[0]);
      const SymbolId a = lookup(actions, words[1], "action");
      const SymbolId s = lookup(observations, words[2], "observation");
      const SymbolId r = lookup(rewards, words[3], "reward");
      const double p = parse_probability(reader, words[4]);
      first_line.emplace(std::make_pair(q, a), reader.line());
      for (const Outcome& o : outputs[q][a]) {
        if (o.observation == s && o.reward == r) reader.fail("duplicate output line");
      }
      outputs[q][a].push_back({s, r, p});
    } else {
      reader.fail("malformed line; expected 'state obs -> state' or 'state action obs reward prob'");
    }
  }
  if (!ended) reader.fail("unexpected end of file; missing 'end' (truncated?)");
  if (reader.next(words)) reader.fail("content after 'end'");

  for (StateId q = 0; q < n; ++q) {
    for (SymbolId a = 0; a < actions.size(); ++a) {
      double sum = 0.0;
      for (const Outcome& o : outputs[q][a]) sum += o.probability;
      const double defect = std::abs(sum - 1.0);
      if (defect > 1e-6) {
        auto it = first_line.find({q, a});
        std::ostringstream msg;
        msg << "row of state " << q << " action " << actions.token(a) << " sums to " << sum;
        throw ParseError(it == first_line.end() ? reader.line() : it->second, msg.str());
      }
      if (defect > kProbabilityTolerance) {
        for (Outcome& o : outputs[q][a]) o.probability /= sum;
      }
    }
  }

  try {
    DynamicsTransducer dynamics(observations, initial, std::move(transitions), std::move(outputs));
    return Rdp(std::move(actions), std::move(observations), std::move(rewards), gamma,
               std::move(dynamics));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(reader.line(), e.what());
  }
}

Rdp parse_rdp(const std::string& text) {
  std::istringstream in(text);
  return parse_rdp(in);
}

void save_rdp(const std::filesystem::path& path, const Rdp& rdp) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_rdp(out, rdp);
  if (!out) throw Error("failed writing " + path.string());
}

Rdp load_rdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_rdp(in);
}

}  // namespace rdpkit
