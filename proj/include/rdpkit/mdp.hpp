#pragma once

#include <span>
#include <string>
#include <vector>

#include "rdpkit/alphabet.hpp"
#include "rdpkit/common.hpp"
#include "rdpkit/pdfa.hpp"

namespace rdpkit {

/// Parses a reward token as a finite nonnegative decimal value.
double parse_reward(std::string_view token);

struct MdpTransition {
  StateId next;
  SymbolId reward;
  double probability;

  bool operator==(const MdpTransition&) const = default;
};

/// Finite discounted MDP with dynamics D(q', r | q, a).
///
/// Rows are stored per (state, action), sorted by (next, reward) with
/// duplicate entries merged. Rewards are identified by token.
class Mdp {
 public:
  Mdp(Alphabet actions, Alphabet rewards, double gamma, StateId initial, std::size_t num_states,
      std::vector<std::vector<MdpTransition>> rows);

  std::size_t num_states() const noexcept { return num_states_; }
  std::size_t num_actions() const noexcept { return actions_.size(); }
  const Alphabet& actions() const noexcept { return actions_; }
  const Alphabet& rewards() const noexcept { return rewards_; }
  double reward_value(SymbolId r) const { return reward_values_.at(r); }
  double max_reward() const noexcept;
  double gamma() const noexcept { return gamma_; }
  StateId initial() const noexcept { return initial_; }

  std::span<const MdpTransition> row(StateId q, SymbolId a) const {
    return rows_[static_cast<std::size_t>(q) * actions_.size() + a];
  }

 private:
  Alphabet actions_;
  Alphabet rewards_;
  std::vector<double> reward_values_;
  double gamma_;
  StateId initial_;
  std::size_t num_states_;
  std::vector<std::vector<MdpTransition>> rows_;
};

/// Q-values indexed by (state, action).
class ActionValueTable {
 public:
  ActionValueTable(std::size_t num_states, std::size_t num_actions)
      : num_actions_(num_actions), values_(num_states * num_actions, 0.0) {}

  std::size_t num_states() const noexcept { return num_actions_ ? values_.size() / num_actions_ : 0; }
  std::size_t num_actions() const noexcept { return num_actions_; }
  double& at(StateId q, SymbolId a) { return values_[q * num_actions_ + a]; }
  double at(StateId q, SymbolId a) const { return values_[q * num_actions_ + a]; }
  /// max_a Q(q, a).
  double value(StateId q) const;
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t num_actions_;
  std::vector<double> values_;
};

/// Deterministic stationary policy: one action id per state.
struct StationaryPolicy {
  std::vector<SymbolId> actions;
};

/// Exactly `iterations` synchronous Bellman-optimality sweeps from the all-zero table.
ActionValueTable value_iteration(const Mdp& mdp, std::size_t iterations);

struct IterationCount {
  std::size_t count = 1;
  /// Set when the maximum reward is zero and every value is trivially zero.
  bool zero_reward = false;
};

/// ⌈ 1/(1−γ) · ln(2·R̂max / (ε·(1−γ)²)) ⌉, floored at one.
IterationCount iteration_count(double gamma, double epsilon, double rmax_hat);

/// Per-state argmax; ties go to the lowest action index.
StationaryPolicy greedy_policy(const ActionValueTable& table);

struct InducedMdp {
  Mdp mdp;
  /// Largest |1 − row sum| seen before renormalization.
  double max_row_defect = 0.0;
};

inline constexpr double kDefaultMaxRowDefect = 0.05;

/// Reconstructs the MDP of a PDFA learned under the exploration policy with
/// stop probability `stop_p`, dividing out the (1−p)/|A| action probability.
/// Throws when a symbol does not parse as `a:s:r` over `actions`, or when a
/// row defect exceeds `max_row_defect` (too few samples).
InducedMdp induced_mdp(const Pdfa& pdfa, double gamma, double stop_p, const Alphabet& actions,
                       double max_row_defect = kDefaultMaxRowDefect);

/// max over (q, a) of ‖D1(·|q,a) − D2(·|φ(q),a)‖₁, with next states mapped by φ.
double mdp_approximation_distance(const Mdp& m1, const Mdp& m2, std::span<const StateId> bijection);

/// Largest entrywise |D1 − D2| under the identity state map, rewards matched by token.
double mdp_max_entry_difference(const Mdp& m1, const Mdp& m2);

/// Optimal state values by value iteration, accurate to `tolerance` in max norm.
std::vector<double> solve_optimal_values(const Mdp& mdp, double tolerance);

/// Value of a stationary policy, accurate to `tolerance` in max norm.
std::vector<double> evaluate_stationary(const Mdp& mdp, const StationaryPolicy& policy,
                                        double tolerance);

/// Human-readable dump for debugging; not a stable format.
std::string dump_mdp(const Mdp& mdp);

}  // namespace rdpkit
