#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdpkit/rdp.hpp"
#include "rdpkit/rl.hpp"

namespace rdpkit {

/// 1e-4 · Rmax / (1−γ), floored at 1e-9.
double default_gap_tolerance(const Rdp& rdp);

struct GapResult {
  double policy_value = 0.0;
  double optimal_value = 0.0;
  /// optimal − policy; may be slightly negative, within 2·tolerance.
  double gap = 0.0;
  std::size_t fallback_incidents = 0;
};

/// Optimality gap at the empty history, each side computed to tolerance/2.
GapResult optimality_gap(const Rdp& rdp, const PolicyTransducer& policy, double tolerance);
/// As above with a precomputed optimal value.
GapResult optimality_gap(const Rdp& rdp, const PolicyTransducer& policy, double tolerance,
                         double optimal_value);

/// FNV-1a (64-bit, hex) of the `rdpkit-rdp v1` serialization.
std::string spec_hash(const Rdp& rdp);

struct BaselineConfig {
  /// Longest observation history that gets its own cluster layer.
  std::size_t history_cap = 6;
  /// L1 distance under which two histories' next-observation distributions merge.
  double merge_tolerance = 0.2;
  /// Episodes to collect; 0 means until the action budget runs out.
  std::size_t episode_budget = 0;
  /// Action budget; 0 means unbounded (then episode_budget must be set).
  std::uint64_t action_budget = 0;
  /// Histories seen fewer times are treated as unobserved.
  std::size_t min_visits = 10;
};

struct BaselineResult {
  PolicyTransducer policy;
  std::size_t clusters = 0;
  std::size_t episodes = 0;
  std::uint64_t action_steps = 0;
};

/// History clustering on empirical next-observation distributions. Collects
/// fixed-length uniform-policy episodes, clusters same-length observation
/// histories by single linkage (shortest length first), closes the last
/// layer with a sliding window over the most recent observations, and plays
/// the optimal policy of the resulting cluster MDP.
BaselineResult baseline_history_clustering(Environment& env, const BaselineConfig& cfg, double gamma,
                                           double epsilon, Rng& rng, const EpisodeSink& episodes = {});

enum class AlgorithmKind { kAlgorithm1, kAlgorithm2, kBaseline };

const char* algorithm_name(AlgorithmKind kind);
std::optional<AlgorithmKind> parse_algorithm(std::string_view name);

struct ExperimentConfig {
  AlgorithmKind algorithm = AlgorithmKind::kAlgorithm2;
  Algorithm1Config alg1;
  Algorithm2Config alg2;
  BaselineConfig baseline;
  /// Threshold for an emission to count as ε-optimal.
  double epsilon = 0.1;
  std::uint64_t step_cap = 200'000;
  /// 0 means default_gap_tolerance.
  double gap_tolerance = 0.0;
  /// Worker threads; 0 means hardware concurrency.
  std::size_t workers = 0;
};

struct EmissionRecord {
  std::size_t emission_index = 0;
  std::uint64_t action_steps = 0;
  double policy_value = 0.0;
  double optimal_value = 0.0;
  double gap = 0.0;
  /// This emission and every later one have gap ≤ ε.
  bool sustained = false;
  /// Seconds since the run started. Not serialized.
  double wall_time = 0.0;
};

struct ExperimentRecord {
  std::uint64_t seed = 0;
  std::string spec_hash;
  std::vector<EmissionRecord> emissions;
  /// Action steps at the first emission of the final ε-optimal streak.
  std::optional<std::uint64_t> steps_to_sustained;
  bool success = false;
};

/// Marks the sustained flags and summary fields from the per-emission gaps.
void finalize_record(ExperimentRecord& record, double epsilon);

/// What a run leaves behind besides its record.
struct RunArtifacts {
  std::vector<Episode> episodes;
  std::shared_ptr<const PolicyTransducer> final_policy;
  std::vector<std::string> errors;
};

/// One run for one seed. The env stream and the agent stream are split from
/// the seed by name.
ExperimentRecord run_experiment(const Rdp& rdp, const ExperimentConfig& cfg, std::uint64_t seed,
                                RunArtifacts* artifacts = nullptr);

/// Independent runs over `seeds` on a worker pool, returned sorted by seed.
/// Artifacts, when requested, are indexed like `seeds`.
std::vector<ExperimentRecord> run_pac_experiment(const Rdp& rdp, const ExperimentConfig& cfg,
                                                 std::span<const std::uint64_t> seeds,
                                                 std::vector<RunArtifacts>* artifacts = nullptr);

/// Header, one row per emission and one summary row per record, then the
/// spec hash on a trailing `# spec` line.
void write_experiment_csv(std::ostream& out, const std::vector<ExperimentRecord>& records);
std::string experiment_csv(const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> read_experiment_csv(std::istream& in);

struct CollisionResult {
  /// Some length-m observation history occurs at least twice.
  bool observed = false;
  double bound = 0.0;
  /// Bound ≥ 1: the check carries no information.
  bool vacuous = false;
};

/// 1/4 · e² · (√2·g)^{2m} · N².
double duplicate_history_bound(double g, std::size_t m, std::size_t n);

/// Collision indicator over the first m observations of each episode long
/// enough to have them; N is the number of episodes given.
CollisionResult duplicate_history_rate(std::span<const Episode> episodes, std::size_t m, double g);

/// P(X ≥ k) for X ~ Binomial(n, p).
double binomial_upper_tail(std::size_t n, std::size_t k, double p);

struct BinomialCheck {
  std::size_t trials = 0;
  std::size_t hits = 0;
  double bound = 0.0;
  double p_value = 1.0;
  bool vacuous = false;
  /// The observed frequency is consistent with a rate ≤ bound at the given level.
  bool pass = true;
};

/// One-sided test of H0: rate ≤ bound; rejects when P(X ≥ hits | bound) < 1 − level.
BinomialCheck collision_frequency_check(std::size_t trials, std::size_t hits, double bound, double level = 0.99);

}  // namespace rdpkit
