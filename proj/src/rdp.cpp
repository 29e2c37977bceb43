#include "rdpkit/rdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <sstream>
#include <unordered_map>

namespace rdpkit {

namespace {

void require_plain_tokens(const Alphabet& alphabet, const char* what) {
  for (const auto& t : alphabet.tokens()) {
    if (t.find(':') != std::string::npos) {
      throw Error(std::string(what) + " token '" + t + "' must not contain ':'");
    }
  }
}

}  // namespace

Rdp::Rdp(Alphabet actions, Alphabet observations, Alphabet rewards, double gamma,
         DynamicsTransducer dynamics)
    : actions_(std::move(actions)),
      rewards_(std::move(rewards)),
      gamma_(gamma),
      dynamics_(std::move(dynamics)) {
  if (actions_.empty()) throw Error("RDP needs at least one action");
  if (!(dynamics_.inputs() == observations)) {
    throw Error("dynamics transducer input alphabet differs from the observations");
  }
  if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw Error("discount must lie in [0, 1)");
  require_plain_tokens(actions_, "action");
  require_plain_tokens(dynamics_.inputs(), "observation");
  require_plain_tokens(rewards_, "reward");
  for (const auto& t : rewards_.tokens()) reward_values_.push_back(parse_reward(t));

  for (StateId q = 0; q < dynamics_.num_states(); ++q) {
    const ActionTable& table = dynamics_.output(q);
    if (table.size() != actions_.size()) {
      throw Error("state " + std::to_string(q) + " has " + std::to_string(table.size()) +
                  " action rows, expected " + std::to_string(actions_.size()));
    }
    for (SymbolId a = 0; a < table.size(); ++a) {
      double sum = 0.0;
      std::vector<std::pair<SymbolId, SymbolId>> seen;
      for (const Outcome& o : table[a]) {
        const std::string where =
            "state " + std::to_string(q) + " action " + actions_.token(a);
        if (o.observation >= observations.size()) throw Error(where + ": unknown observation");
        if (o.reward >= rewards_.size()) throw Error(where + ": unknown reward");
        if (!(o.probability >= 0.0 && o.probability <= 1.0)) {
          throw Error(where + ": probability out of [0,1]");
        }
        if (o.probability > 0.0 && dynamics_.next(q, o.observation) == kNoState) {
          throw Error(where + ": observation " + observations.token(o.observation) +
                      " has positive probability but no transition");
        }
        seen.emplace_back(o.observation, o.reward);
        sum += o.probability;
      }
      std::sort(seen.begin(), seen.end());
      if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
        throw Error("state " + std::to_string(q) + " action " + actions_.token(a) +
                    ": repeated (observation, reward) outcome");
      }
      if (std::abs(sum - 1.0) > kProbabilityTolerance) {
        std::ostringstream msg;
        msg << "state " << q << " action " << actions_.token(a) << ": row sums to " << sum;
        throw Error(msg.str());
      }
    }
  }
}

double Rdp::max_reward() const noexcept {
  double best = 0.0;
  for (double v : reward_values_) best = std::max(best, v);
  return best;
}

std::vector<bool> Rdp::reachable() const {
  std::vector<bool> seen(num_states(), false);
  std::deque<StateId> queue{dynamics_.initial()};
  seen[dynamics_.initial()] = true;
  while (!queue.empty()) {
    const StateId q = queue.front();
    queue.pop_front();
    for (const auto& row : dynamics_.output(q)) {
      for (const Outcome& o : row) {
        if (o.probability <= 0.0) continue;
        const StateId t = dynamics_.next(q, o.observation);
        if (!seen[t]) {
          seen[t] = true;
          queue.push_back(t);
        }
      }
    }
  }
  return seen;
}

const std::vector<Outcome>& dynamics_at(const Rdp& rdp, std::span<const SymbolId> history,
                                        SymbolId action) {
  if (action >= rdp.actions().size()) throw Error("dynamics_at: unknown action");
  StateId q = rdp.dynamics().initial();
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i] >= rdp.observations().size()) {
      throw Error("dynamics_at: unknown observation at position " + std::to_string(i));
    }
    q = rdp.dynamics().next(q, history[i]);
    if (q == kNoState) {
      throw Error("dynamics_at: history has no transition at position " + std::to_string(i) +
                  " (observation " + rdp.observations().token(history[i]) + ")");
    }
  }
  return rdp.outcomes(q, action);
}

PolicyTransducer::PolicyTransducer(Transducer<SymbolId> machine, Alphabet actions)
    : machine_(std::move(machine)), actions_(std::move(actions)) {
  for (SymbolId a : machine_.outputs()) {
    if (a >= actions_.size()) throw Error("policy output is not an action");
  }
}

StateId PolicyTransducer::next(StateId q, std::string_view observation) const {
  if (q == kNoState) return kNoState;
  auto s = observations().find(observation);
  if (!s) return kNoState;
  return machine_.next(q, *s);
}

const std::string& PolicyRunner::action() const {
  if (state_ == kNoState) return policy_->actions().token(0);
  return policy_->actions().token(policy_->action(state_));
}

void PolicyRunner::observe(std::string_view observation) {
  if (state_ == kNoState) return;
  state_ = policy_->next(state_, observation);
  if (state_ == kNoState) ++incidents_;
}

namespace {

Pdfa encode_under_exploration(const Rdp& rdp, double stop_p) {
  const std::size_t n = rdp.num_states();
  const std::size_t na = rdp.actions().size();

  std::map<std::string, int> symbols;
  for (StateId q = 0; q < n; ++q) {
    for (SymbolId a = 0; a < na; ++a) {
      for (const Outcome& o : rdp.outcomes(q, a)) {
        if (o.probability <= 0.0) continue;
        symbols.emplace(join_triple(rdp.actions().token(a), rdp.observations().token(o.observation),
                                    rdp.rewards().token(o.reward)),
                        0);
      }
    }
  }
  std::vector<std::string> tokens;
  for (const auto& [token, unused] : symbols) tokens.push_back(token);
  Alphabet alphabet(std::move(tokens));
  const std::size_t sigma = alphabet.size();

  std::vector<StateId> transitions(n * sigma, kNoState);
  std::vector<double> emissions(n * (sigma + 1), 0.0);
  const double action_prob = (1.0 - stop_p) / static_cast<double>(na);
  for (StateId q = 0; q < n; ++q) {
    for (SymbolId s = 0; s < sigma; ++s) {
      const TripleView t = *split_triple(alphabet.token(s));
      const SymbolId obs = rdp.observations().at(t.observation);
      transitions[q * sigma + s] = rdp.dynamics().next(q, obs);
    }
    for (SymbolId a = 0; a < na; ++a) {
      for (const Outcome& o : rdp.outcomes(q, a)) {
        if (o.probability <= 0.0) continue;
        const SymbolId s = alphabet.at(join_triple(rdp.actions().token(a),
                                                   rdp.observations().token(o.observation),
                                                   rdp.rewards().token(o.reward)));
        emissions[q * (sigma + 1) + s] = action_prob * o.probability;
      }
    }
    emissions[q * (sigma + 1) + sigma] = stop_p;
  }
  return Pdfa(std::move(alphabet), rdp.dynamics().initial(), std::move(transitions),
              std::move(emissions));
}

}  // namespace

Pdfa rdp_to_pdfa(const Rdp& rdp, double stop_p) {
  if (!(stop_p > 0.0 && stop_p < 1.0)) throw Error("rdp_to_pdfa: stop probability must lie in (0, 1)");
  return encode_under_exploration(rdp, stop_p);
}

Mdp ideal_mdp(const Rdp& rdp) {
  const std::size_t n = rdp.num_states();
  const std::size_t na = rdp.actions().size();
  std::vector<std::vector<MdpTransition>> rows(n * na);
  for (StateId q = 0; q < n; ++q) {
    for (SymbolId a = 0; a < na; ++a) {
      for (const Outcome& o : rdp.outcomes(q, a)) {
        if (o.probability <= 0.0) continue;
        rows[q * na + a].push_back({rdp.dynamics().next(q, o.observation), o.reward, o.probability});
      }
    }
  }
  return Mdp(rdp.actions(), rdp.rewards(), rdp.gamma(), rdp.dynamics().initial(), n,
             std::move(rows));
}

RdpParameters compute_parameters(const Rdp& rdp, std::uint64_t enumeration_cap) {
  const std::size_t n = rdp.num_states();
  const std::size_t na = rdp.actions().size();
  const std::vector<bool> reach = rdp.reachable();
  RdpParameters params;
  params.n = n;
  params.horizon = n;

  // ρ: best single-step visit probability per state under uniform actions.
  std::vector<std::unordered_map<StateId, double>> mass(n);
  for (StateId q = 0; q < n; ++q) {
    for (SymbolId a = 0; a < na; ++a) {
      for (const Outcome& o : rdp.outcomes(q, a)) {
        if (o.probability > 0.0) mass[q][rdp.dynamics().next(q, o.observation)] += o.probability;
      }
    }
  }
  std::vector<double> dist(n, 0.0);
  std::vector<double> best(n, 0.0);
  dist[rdp.dynamics().initial()] = 1.0;
  best = dist;
  for (std::size_t step = 1; step <= n; ++step) {
    std::vector<double> next(n, 0.0);
    for (StateId q = 0; q < n; ++q) {
      if (dist[q] == 0.0) continue;
      for (const auto& [t, m] : mass[q]) next[t] += dist[q] * (m / static_cast<double>(na));
    }
    dist.swap(next);
    for (StateId q = 0; q < n; ++q) best[q] = std::max(best[q], dist[q]);
  }
  for (StateId q = 0; q < n; ++q) {
    if (best[q] > 0.0) params.rho = std::min(params.rho, best[q]);
  }

  // η: minimum nonzero observation probability, rewards marginalized.
  for (StateId q = 0; q < n; ++q) {
    if (!reach[q]) continue;
    for (SymbolId a = 0; a < na; ++a) {
      std::map<SymbolId, double> by_obs;
      for (const Outcome& o : rdp.outcomes(q, a)) by_obs[o.observation] += o.probability;
      for (const auto& [obs, p] : by_obs) {
        if (p > 0.0) params.eta = std::min(params.eta, p);
      }
    }
  }

  // μ: trace automaton under the uniform policy without stopping.
  const Pdfa traces = encode_under_exploration(rdp, 0.0);
  bool found = false;
  for (StateId q1 = 0; q1 < n; ++q1) {
    if (!reach[q1]) continue;
    for (StateId q2 = q1 + 1; q2 < n; ++q2) {
      if (!reach[q2]) continue;
      const PrefixGap gap = prefix_gap(traces, q1, q2, n, enumeration_cap);
      if (gap.complete && gap.value == 0.0) {
        params.equivalent_pairs.emplace_back(q1, q2);
        continue;
      }
      if (!gap.complete) params.mu_lower_bound = true;
      if (!found || gap.value < params.mu) params.mu = gap.value;
      found = true;
    }
  }
  if (!found) {
    params.mu = 1.0;
    params.mu_by_convention = true;
  }
  return params;
}

PolicyEvaluation evaluate_policy_exact(const Rdp& rdp, const PolicyTransducer& policy,
                                       double tolerance, FallbackMode mode) {
  const StateId fallback = static_cast<StateId>(policy.num_states());
  std::vector<SymbolId> action_map(policy.actions().size());
  for (SymbolId a = 0; a < policy.actions().size(); ++a) {
    auto id = rdp.actions().find(policy.actions().token(a));
    if (!id) throw Error("policy action '" + policy.actions().token(a) + "' is not an RDP action");
    action_map[a] = *id;
  }
  std::vector<StateId> obs_map(rdp.observations().size(), kNoState);
  for (SymbolId s = 0; s < rdp.observations().size(); ++s) {
    if (auto id = policy.observations().find(rdp.observations().token(s))) obs_map[s] = *id;
  }

  using Pair = std::pair<StateId, StateId>;
  std::map<Pair, StateId> index;
  std::vector<Pair> pairs;
  auto intern = [&](Pair p) {
    auto [it, inserted] = index.emplace(p, static_cast<StateId>(pairs.size()));
    if (inserted) pairs.push_back(p);
    return it->second;
  };
  intern({rdp.dynamics().initial(), policy.initial()});

  PolicyEvaluation result;
  std::vector<std::vector<MdpTransition>> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [q, ps] = pairs[i];
    const SymbolId action = action_map[ps == fallback ? 0 : policy.action(ps)];
    std::vector<MdpTransition> row;
    for (const Outcome& o : rdp.outcomes(q, action)) {
      if (o.probability <= 0.0) continue;
      StateId next_ps = fallback;
      if (ps != fallback) {
        const SymbolId mapped = obs_map[o.observation];
        next_ps = mapped == kNoState ? kNoState : policy.machine().next(ps, mapped);
        if (next_ps == kNoState) {
          if (mode == FallbackMode::kStrict) {
            throw Error("policy undefined at (dynamics state " + std::to_string(q) +
                        ", policy state " + std::to_string(ps) + ") on observation " +
                        rdp.observations().token(o.observation));
          }
          ++result.fallback_incidents;
          next_ps = fallback;
        }
      }
      row.push_back({intern({rdp.dynamics().next(q, o.observation), next_ps}), o.reward,
                     o.probability});
    }
    rows.push_back(std::move(row));
  }

  Mdp chain(Alphabet({"policy"}), rdp.rewards(), rdp.gamma(), 0, pairs.size(), std::move(rows));
  StationaryPolicy only{std::vector<SymbolId>(pairs.size(), 0)};
  result.value = evaluate_stationary(chain, only, tolerance)[0];
  return result;
}

double optimal_value(const Rdp& rdp, double tolerance) {
  return solve_optimal_values(ideal_mdp(rdp), tolerance)[rdp.dynamics().initial()];
}

}  // namespace rdpkit
