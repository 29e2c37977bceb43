#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rdpkit/learning.hpp"
#include "rdpkit/mdp.hpp"
#include "rdpkit/random.hpp"
#include "rdpkit/rdp.hpp"

namespace rdpkit {

struct EpisodeStep {
  std::string action;
  std::string observation;
  std::string reward;

  bool operator==(const EpisodeStep&) const = default;
};

struct Episode {
  std::vector<EpisodeStep> steps;
  /// Cut by the action budget rather than by the stop action.
  bool hard_stopped = false;

  std::size_t size() const noexcept { return steps.size(); }
  /// The `a:s:r` symbols of the episode.
  std::vector<std::string> symbols() const;
  bool operator==(const Episode&) const = default;
};

struct StepOutcome {
  std::string_view observation;
  std::string_view reward;
};

/// An environment the agent can only act in and observe. Views returned by
/// step stay valid for the lifetime of the environment.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const Alphabet& actions() const = 0;
  /// Starts a new episode at the empty history.
  virtual void reset() = 0;
  virtual StepOutcome step(SymbolId action) = 0;
};

/// Samples an RDP through its dynamics transducer.
class RdpSimulator final : public Environment {
 public:
  RdpSimulator(const Rdp& rdp, Rng rng);

  const Alphabet& actions() const override { return rdp_->actions(); }
  void reset() override { state_ = rdp_->dynamics().initial(); }
  StepOutcome step(SymbolId action) override;

 private:
  const Rdp* rdp_;
  Rng rng_;
  StateId state_;
  std::vector<double> weights_;
};

/// Iteration ℓ of the unknown-bound schedule: p = 1/(10ℓ+1) and
/// k = ⌈(2/p) ℓ² (ℓ + 5 ln ℓ)⌉.
struct ScheduleState {
  std::size_t ell = 1;
  std::uint64_t p_denominator = 11;
  double p = 1.0 / 11.0;
  std::uint64_t k = 22;
  std::size_t episodes_collected = 0;
  std::uint64_t actions_used = 0;

  static ScheduleState for_iteration(std::size_t ell);
};

struct ExploreResult {
  Episode episode;
  bool hard_stopped = false;
};

/// One episode of the exploration policy: stop with probability p, otherwise a
/// uniform action. Only actions count against `budget`.
ExploreResult explore_episode(Environment& env, double stop_p, std::uint64_t budget, Rng& rng);

struct PolicyEmission {
  std::size_t index = 0;
  /// Actions performed before this policy was produced.
  std::uint64_t action_steps = 0;
  std::size_t episodes = 0;
  /// Strings in the sample the policy was learned from.
  std::size_t sample_size = 0;
  /// ℓ for the unknown-bound algorithm, n̂ for the known-bound one.
  std::size_t state_bound = 0;
  std::size_t learned_states = 0;
  bool capacity_saturated = false;
  std::size_t unseen_observations = 0;
  std::shared_ptr<const PolicyTransducer> policy;
};

/// Receives emitted policies on the run's thread.
using PolicySink = std::function<void(const PolicyEmission&)>;
/// Receives every finished episode, hard-stopped ones included.
using EpisodeSink = std::function<void(const Episode&)>;

/// Bounds for a run that would otherwise continue forever.
struct RunLimits {
  std::uint64_t max_action_steps = 0;
  /// 0 means unbounded.
  std::size_t max_emissions = 0;
};

struct LearnerTuning {
  std::size_t min_visits = 20;
  std::size_t depth_cap = 8;
  std::optional<double> distinguishability_floor;
  std::optional<double> forced_split_score;
};

struct Algorithm1Config {
  double gamma = 0.9;
  double epsilon = 0.1;
  double delta = 0.1;
  LearnerTuning learner;
};

struct Algorithm2Config {
  double gamma = 0.9;
  double epsilon = 0.1;
  double delta = 0.1;
  std::size_t n_hat = 1;
  /// Relearn after this many new episodes; 0 relearns after episode 1, 2, 4, 8, ...
  std::size_t relearn_every = 0;
  LearnerTuning learner;
};

struct RunSummary {
  std::uint64_t action_steps = 0;
  std::size_t episodes = 0;
  std::size_t emissions = 0;
  /// Learning attempts that failed and produced no policy.
  std::size_t skipped = 0;
  std::vector<std::string> errors;
};

RunSummary algorithm1(Environment& env, const Algorithm1Config& cfg, Rng& rng, const RunLimits& limits,
                      const PolicySink& sink, const EpisodeSink& episodes = {});

RunSummary algorithm2(Environment& env, const Algorithm2Config& cfg, Rng& rng, const RunLimits& limits,
                      const PolicySink& sink, const EpisodeSink& episodes = {});

struct ComposedPolicy {
  PolicyTransducer policy;
  /// (reachable PDFA state, observation) pairs left undefined for lack of data.
  std::vector<std::pair<StateId, std::string>> unseen;
};

/// Moore machine over observations that plays `stationary` on the projection
/// of the PDFA transitions. Throws when two (action, reward) choices for the
/// same observation lead to different states.
ComposedPolicy compose_policy(const StationaryPolicy& stationary, const Pdfa& pdfa,
                              const Alphabet& actions);

/// Learn, induce, solve and compose: one pass of the learning loop body.
struct PolicyFromSample {
  LearnResult learned;
  ComposedPolicy composed;
};
PolicyFromSample policy_from_sample(const PrefixTree& tree, const Alphabet& symbols,
                                    const LearnerConfig& learner, const Alphabet& actions, double gamma,
                                    double epsilon, double stop_p);

/// Thread-safe hand-off of emissions to a consumer on another thread.
class EmissionQueue {
 public:
  void push(PolicyEmission emission);
  /// Blocks until an emission is available; nullopt once closed and drained.
  std::optional<PolicyEmission> pop();
  void close();
  PolicySink sink();

 private:
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<PolicyEmission> items_;
  bool closed_ = false;
};

void write_episodes(std::ostream& out, const std::vector<Episode>& episodes);
void write_episode(std::ostream& out, const Episode& episode);
std::vector<Episode> read_episodes(std::istream& in);

/// The naturally stopped episodes as a sample for the learner.
SampleSet sample_from_episodes(const std::vector<Episode>& episodes);

}  // namespace rdpkit
