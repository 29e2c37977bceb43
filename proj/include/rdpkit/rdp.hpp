#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rdpkit/alphabet.hpp"
#include "rdpkit/mdp.hpp"
#include "rdpkit/pdfa.hpp"
#include "rdpkit/transducer.hpp"

namespace rdpkit {

struct Outcome {
  SymbolId observation;
  SymbolId reward;
  double probability;

  bool operator==(const Outcome&) const = default;
};

/// Per-state output of a dynamics transducer: for each action, the outcomes
/// (observation, reward) with positive probability.
using ActionTable = std::vector<std::vector<Outcome>>;
using DynamicsTransducer = Transducer<ActionTable>;

/// Regular decision process whose dynamics are given by a Moore transducer
/// over observations. The empty history is the start of every episode.
class Rdp {
 public:
  Rdp(Alphabet actions, Alphabet observations, Alphabet rewards, double gamma,
      DynamicsTransducer dynamics);

  const Alphabet& actions() const noexcept { return actions_; }
  const Alphabet& observations() const noexcept { return dynamics_.inputs(); }
  const Alphabet& rewards() const noexcept { return rewards_; }
  double reward_value(SymbolId r) const { return reward_values_.at(r); }
  double max_reward() const noexcept;
  double gamma() const noexcept { return gamma_; }
  const DynamicsTransducer& dynamics() const noexcept { return dynamics_; }
  std::size_t num_states() const noexcept { return dynamics_.num_states(); }

  const std::vector<Outcome>& outcomes(StateId q, SymbolId action) const {
    return dynamics_.output(q)[action];
  }

  /// Transducer states reachable through positive-probability observations.
  std::vector<bool> reachable() const;

 private:
  Alphabet actions_;
  Alphabet rewards_;
  std::vector<double> reward_values_;
  double gamma_;
  DynamicsTransducer dynamics_;
};

/// θ(τ(q0, h))(a, ·). Throws naming the position of the first undefined step.
const std::vector<Outcome>& dynamics_at(const Rdp& rdp, std::span<const SymbolId> history,
                                        SymbolId action);

/// Moore machine over observations emitting action ids.
class PolicyTransducer {
 public:
  PolicyTransducer(Transducer<SymbolId> machine, Alphabet actions);

  const Transducer<SymbolId>& machine() const noexcept { return machine_; }
  const Alphabet& actions() const noexcept { return actions_; }
  const Alphabet& observations() const noexcept { return machine_.inputs(); }
  std::size_t num_states() const noexcept { return machine_.num_states(); }
  StateId initial() const noexcept { return machine_.initial(); }
  SymbolId action(StateId q) const { return machine_.output(q); }
  /// Next state, or kNoState when the observation is unknown or the transition undefined.
  StateId next(StateId q, std::string_view observation) const;

 private:
  Transducer<SymbolId> machine_;
  Alphabet actions_;
};

/// Executes a policy transducer along an observation stream.
///
/// Off the learned support (undefined transition) the runner falls back to
/// the lowest-indexed action and stays there, counting the incident.
class PolicyRunner {
 public:
  explicit PolicyRunner(const PolicyTransducer& policy)
      : policy_(&policy), state_(policy.initial()) {}

  const std::string& action() const;
  void observe(std::string_view observation);
  void reset() { state_ = policy_->initial(); }
  bool in_fallback() const noexcept { return state_ == kNoState; }
  std::size_t incidents() const noexcept { return incidents_; }

 private:
  const PolicyTransducer* policy_;
  StateId state_;
  std::size_t incidents_ = 0;
};

struct RdpParameters {
  std::size_t n = 0;
  double rho = 1.0;
  double mu = 1.0;
  double eta = 1.0;
  /// Trace length bound used for μ (= n).
  std::size_t horizon = 0;
  /// μ is only a lower bound because the enumeration cap was reached.
  bool mu_lower_bound = false;
  /// Fewer than two reachable states: μ = 1 by convention.
  bool mu_by_convention = false;
  /// Reachable state pairs with identical trace distributions (non-minimal input).
  std::vector<std::pair<StateId, StateId>> equivalent_pairs;
};

/// PDFA of the RDP under the exploration policy that stops with probability p.
Pdfa rdp_to_pdfa(const Rdp& rdp, double stop_p);

/// The MDP over dynamics-transducer states with observations marginalized out.
Mdp ideal_mdp(const Rdp& rdp);

/// n, ρ, μ, η computed exactly (μ up to the enumeration cap).
RdpParameters compute_parameters(const Rdp& rdp,
                                 std::uint64_t enumeration_cap = kDefaultEnumerationCap);

enum class FallbackMode {
  /// Undefined policy transitions on reachable pairs raise an Error.
  kStrict,
  /// Use the PolicyRunner fallback and count incidents.
  kFallback,
};

struct PolicyEvaluation {
  double value = 0.0;
  /// Reachable (dynamics state, policy state, observation) triples that hit the fallback.
  std::size_t fallback_incidents = 0;
};

/// Value of the policy at the empty history, within `tolerance` of the exact value.
PolicyEvaluation evaluate_policy_exact(const Rdp& rdp, const PolicyTransducer& policy,
                                       double tolerance, FallbackMode mode = FallbackMode::kStrict);

/// Optimal value at the empty history via value iteration on the ideal MDP.
double optimal_value(const Rdp& rdp, double tolerance);

}  // namespace rdpkit
