#include "rdpkit/mdp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace rdpkit {

double parse_reward(std::string_view token) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(value)) {
    throw Error("reward token '" + std::string(token) + "' is not a decimal number");
  }
  if (value < 0.0) throw Error("reward '" + std::string(token) + "' is negative");
  return value;
}

Mdp::Mdp(Alphabet actions, Alphabet rewards, double gamma, StateId initial,
         std::size_t num_states, std::vector<std::vector<MdpTransition>> rows)
    : actions_(std::move(actions)),
      rewards_(std::move(rewards)),
      gamma_(gamma),
      initial_(initial),
      num_states_(num_states),
      rows_(std::move(rows)) {
  if (num_states_ == 0) throw Error("MDP needs at least one state");
  if (actions_.empty()) throw Error("MDP needs at least one action");
  if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw Error("discount must lie in [0, 1)");
  if (initial_ >= num_states_) throw Error("MDP initial state out of range");
  if (rows_.size() != num_states_ * actions_.size()) throw Error("MDP row count mismatch");
  reward_values_.reserve(rewards_.size());
  for (const auto& token : rewards_.tokens()) reward_values_.push_back(parse_reward(token));

  for (std::size_t i = 0; i < rows_.size(); ++i) {
    auto& row = rows_[i];
    std::sort(row.begin(), row.end(), [](const MdpTransition& a, const MdpTransition& b) {
      return std::tie(a.next, a.reward) < std::tie(b.next, b.reward);
    });
    std::vector<MdpTransition> merged;
    double sum = 0.0;
    for (const auto& t : row) {
      if (t.next >= num_states_) throw Error("MDP transition to a missing state");
      if (t.reward >= rewards_.size()) throw Error("MDP transition with unknown reward");
      if (!(t.probability >= 0.0 && t.probability <= 1.0 + kProbabilityTolerance)) {
        throw Error("MDP probability out of [0,1]");
      }
      sum += t.probability;
      if (t.probability == 0.0) continue;
      if (!merged.empty() && merged.back().next == t.next && merged.back().reward == t.reward) {
        merged.back().probability += t.probability;
      } else {
        merged.push_back(t);
      }
    }
    if (std::abs(sum - 1.0) > kProbabilityTolerance) {
      std::ostringstream msg;
      msg << "MDP row (state " << i / actions_.size() << ", action "
          << actions_.token(static_cast<SymbolId>(i % actions_.size())) << ") sums to " << sum;
      throw Error(msg.str());
    }
    row = std::move(merged);
  }
}

double Mdp::max_reward() const noexcept {
  double best = 0.0;
  for (double v : reward_values_) best = std::max(best, v);
  return best;
}

double ActionValueTable::value(StateId q) const {
  double best = at(q, 0);
  for (SymbolId a = 1; a < num_actions_; ++a) best = std::max(best, at(q, a));
  return best;
}

namespace {

double backup(const Mdp& mdp, StateId q, SymbolId a, std::span<const double> values) {
  double total = 0.0;
  for (const auto& t : mdp.row(q, a)) {
    total += t.probability * (mdp.reward_value(t.reward) + mdp.gamma() * values[t.next]);
  }
  return total;
}

double sup_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Iterates `sweep` until successive iterates are within tolerance·(1−γ)/(2γ),
// which puts the last iterate within tolerance/2 of the fixed point.
template <class Sweep>
std::vector<double> fixed_point(std::size_t n, double gamma, double tolerance, Sweep sweep) {
  if (!(tolerance > 0.0)) throw Error("tolerance must be positive");
  std::vector<double> current(n, 0.0);
  std::vector<double> next(n, 0.0);
  if (gamma == 0.0) {
    sweep(current, next);
    return next;
  }
  const double stop = tolerance * (1.0 - gamma) / (2.0 * gamma);
  for (;;) {
    sweep(current, next);
    const double diff = sup_distance(current, next);
    current.swap(next);
    if (diff < stop) return current;
  }
}

}  // namespace

ActionValueTable value_iteration(const Mdp& mdp, std::size_t iterations) {
  const std::size_t n = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  ActionValueTable table(n, na);
  std::vector<double> values(n, 0.0);
  for (std::size_t it = 0; it < iterations; ++it) {
    ActionValueTable next(n, na);
    for (StateId q = 0; q < n; ++q) {
      for (SymbolId a = 0; a < na; ++a) next.at(q, a) = backup(mdp, q, a, values);
    }
    table = std::move(next);
    for (StateId q = 0; q < n; ++q) values[q] = table.value(q);
  }
  return table;
}

IterationCount iteration_count(double gamma, double epsilon, double rmax_hat) {
  if (!(epsilon > 0.0)) throw Error("iteration_count: epsilon must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error("iteration_count: gamma must lie in [0, 1)");
  if (rmax_hat < 0.0) throw Error("iteration_count: negative maximum reward");
  if (rmax_hat == 0.0) return {1, true};
  const double horizon = 1.0 / (1.0 - gamma);
  const double raw =
      std::ceil(horizon * std::log(2.0 * rmax_hat / (epsilon * (1.0 - gamma) * (1.0 - gamma))));
  return {raw < 1.0 ? std::size_t{1} : static_cast<std::size_t>(raw), false};
}

StationaryPolicy greedy_policy(const ActionValueTable& table) {
  StationaryPolicy policy;
  policy.actions.resize(table.num_states());
  for (StateId q = 0; q < table.num_states(); ++q) {
    SymbolId best = 0;
    for (SymbolId a = 1; a < table.num_actions(); ++a) {
      if (table.at(q, a) > table.at(q, best)) best = a;
    }
    policy.actions[q] = best;
  }
  return policy;
}

InducedMdp induced_mdp(const Pdfa& pdfa, double gamma, double stop_p, const Alphabet& actions,
                       double max_row_defect) {
  if (!(stop_p >= 0.0 && stop_p < 1.0)) throw Error("induced_mdp: stop probability must lie in [0, 1)");
  if (actions.empty()) throw Error("induced_mdp: empty action set");
  const std::size_t sigma = pdfa.alphabet().size();

  struct Parsed {
    SymbolId action;
    SymbolId reward;
  };
  std::vector<std::string> reward_tokens;
  for (const auto& symbol : pdfa.alphabet().tokens()) {
    auto triple = split_triple(symbol);
    if (!triple) throw Error("induced_mdp: symbol '" + symbol + "' is not an a:s:r triple");
    if (!actions.find(triple->action)) {
      throw Error("induced_mdp: symbol '" + symbol + "' uses an unknown action");
    }
    reward_tokens.emplace_back(triple->reward);
  }
  // Reward set: exactly the rewards occurring in the alphabet, ordered by value.
  std::sort(reward_tokens.begin(), reward_tokens.end());
  reward_tokens.erase(std::unique(reward_tokens.begin(), reward_tokens.end()), reward_tokens.end());
  std::stable_sort(reward_tokens.begin(), reward_tokens.end(),
                   [](const std::string& a, const std::string& b) {
                     return parse_reward(a) < parse_reward(b);
                   });
  Alphabet rewards(reward_tokens);

  std::vector<Parsed> parsed;
  parsed.reserve(sigma);
  for (const auto& symbol : pdfa.alphabet().tokens()) {
    auto triple = *split_triple(symbol);
    parsed.push_back({actions.at(triple.action), rewards.at(triple.reward)});
  }

  const std::size_t n = pdfa.num_states();
  const double scale = static_cast<double>(actions.size()) / (1.0 - stop_p);
  std::vector<std::vector<MdpTransition>> rows(n * actions.size());
  double worst = 0.0;
  for (StateId q = 0; q < n; ++q) {
    for (SymbolId s = 0; s < sigma; ++s) {
      const StateId t = pdfa.next(q, s);
      const double e = pdfa.emission(q, s);
      if (t == kNoState || e <= 0.0) continue;
      rows[q * actions.size() + parsed[s].action].push_back({t, parsed[s].reward, scale * e});
    }
    for (SymbolId a = 0; a < actions.size(); ++a) {
      auto& row = rows[q * actions.size() + a];
      double sum = 0.0;
      for (const auto& t : row) sum += t.probability;
      const double defect = std::abs(1.0 - sum);
      worst = std::max(worst, defect);
      if (defect > max_row_defect || sum == 0.0) {
        std::ostringstream msg;
        msg << "induced_mdp: row (state " << q << ", action " << actions.token(a)
            << ") sums to " << sum << "; the sample is likely too small";
        throw Error(msg.str());
      }
      for (auto& t : row) t.probability /= sum;
    }
  }
  return {Mdp(actions, std::move(rewards), gamma, pdfa.initial(), n, std::move(rows)), worst};
}

namespace {

using RowKey = std::pair<StateId, std::string>;

std::map<RowKey, double> keyed_row(const Mdp& m, StateId q, SymbolId a,
                                   std::span<const StateId> relabel) {
  std::map<RowKey, double> out;
  for (const auto& t : m.row(q, a)) {
    const StateId next = relabel.empty() ? t.next : relabel[t.next];
    out[{next, m.rewards().token(t.reward)}] += t.probability;
  }
  return out;
}

SymbolId matching_action(const Mdp& m1, const Mdp& m2, SymbolId a) {
  auto b = m2.actions().find(m1.actions().token(a));
  if (!b) throw Error("MDP action sets differ");
  return *b;
}

}  // namespace

double mdp_approximation_distance(const Mdp& m1, const Mdp& m2, std::span<const StateId> bijection) {
  if (m1.num_actions() != m2.num_actions()) throw Error("MDP action sets differ");
  if (bijection.size() != m1.num_states() || m1.num_states() != m2.num_states()) {
    throw Error("bijection does not cover both state sets");
  }
  std::vector<bool> hit(m2.num_states(), false);
  for (StateId t : bijection) {
    if (t >= m2.num_states() || hit[t]) throw Error("state map is not a bijection");
    hit[t] = true;
  }
  double worst = 0.0;
  for (StateId q = 0; q < m1.num_states(); ++q) {
    for (SymbolId a = 0; a < m1.num_actions(); ++a) {
      auto r1 = keyed_row(m1, q, a, bijection);
      auto r2 = keyed_row(m2, bijection[q], matching_action(m1, m2, a), {});
      double l1 = 0.0;
      for (const auto& [key, p] : r1) {
        auto it = r2.find(key);
        l1 += std::abs(p - (it == r2.end() ? 0.0 : it->second));
      }
      for (const auto& [key, p] : r2) {
        if (!r1.count(key)) l1 += p;
      }
      worst = std::max(worst, l1);
    }
  }
  return worst;
}

double mdp_max_entry_difference(const Mdp& m1, const Mdp& m2) {
  if (m1.num_states() != m2.num_states()) throw Error("MDP state counts differ");
  if (m1.num_actions() != m2.num_actions()) throw Error("MDP action sets differ");
  double worst = 0.0;
  for (StateId q = 0; q < m1.num_states(); ++q) {
    for (SymbolId a = 0; a < m1.num_actions(); ++a) {
      auto r1 = keyed_row(m1, q, a, {});
      auto r2 = keyed_row(m2, q, matching_action(m1, m2, a), {});
      for (const auto& [key, p] : r1) {
        auto it = r2.find(key);
        worst = std::max(worst, std::abs(p - (it == r2.end() ? 0.0 : it->second)));
      }
      for (const auto& [key, p] : r2) {
        if (!r1.count(key)) worst = std::max(worst, p);
      }
    }
  }
  return worst;
}

std::vector<double> solve_optimal_values(const Mdp& mdp, double tolerance) {
  return fixed_point(mdp.num_states(), mdp.gamma(), tolerance,
                     [&](const std::vector<double>& in, std::vector<double>& out) {
                       for (StateId q = 0; q < mdp.num_states(); ++q) {
                         double best = backup(mdp, q, 0, in);
                         for (SymbolId a = 1; a < mdp.num_actions(); ++a) {
                           best = std::max(best, backup(mdp, q, a, in));
                         }
                         out[q] = best;
                       }
                     });
}

std::vector<double> evaluate_stationary(const Mdp& mdp, const StationaryPolicy& policy,
                                        double tolerance) {
  if (policy.actions.size() != mdp.num_states()) throw Error("policy does not cover every state");
  return fixed_point(mdp.num_states(), mdp.gamma(), tolerance,
                     [&](const std::vector<double>& in, std::vector<double>& out) {
                       for (StateId q = 0; q < mdp.num_states(); ++q) {
                         out[q] = backup(mdp, q, policy.actions[q], in);
                       }
                     });
}

std::string dump_mdp(const Mdp& mdp) {
  std::ostringstream out;
  out << "mdp states=" << mdp.num_states() << " actions=" << mdp.num_actions()
      << " gamma=" << mdp.gamma() << " initial=" << mdp.initial() << '\n';
  for (StateId q = 0; q < mdp.num_states(); ++q) {
    for (SymbolId a = 0; a < mdp.num_actions(); ++a) {
      out << "  " << q << ' ' << mdp.actions().token(a) << ':';
      for (const auto& t : mdp.row(q, a)) {
        out << ' ' << t.next << '/' << mdp.rewards().token(t.reward) << '=' << t.probability;
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace rdpkit
