#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdpkit/alphabet.hpp"
#include "rdpkit/common.hpp"
#include "rdpkit/random.hpp"

namespace rdpkit {

/// Probabilistic deterministic finite automaton with a reserved stop symbol.
///
/// Emissions are stored as a dense (|Q| x (|Σ|+1)) table whose last column is
/// the stop probability. The constructor checks only structural validity;
/// the probabilistic conditions are reported by `pdfa_well_formed`.
class Pdfa {
 public:
  Pdfa(Alphabet alphabet, StateId initial, std::vector<StateId> transitions,
       std::vector<double> emissions);

  std::size_t num_states() const noexcept { return num_states_; }
  StateId initial() const noexcept { return initial_; }
  const Alphabet& alphabet() const noexcept { return alphabet_; }

  StateId next(StateId q, SymbolId s) const {
    if (q == kNoState) return kNoState;
    return transitions_[row(q) * alphabet_.size() + s];
  }
  StateId run(StateId q, std::span<const SymbolId> word) const;

  double emission(StateId q, SymbolId s) const {
    return emissions_[row(q) * (alphabet_.size() + 1) + s];
  }
  double stop_probability(StateId q) const {
    return emissions_[row(q) * (alphabet_.size() + 1) + alphabet_.size()];
  }

  const std::vector<StateId>& transitions() const noexcept { return transitions_; }
  const std::vector<double>& emissions() const noexcept { return emissions_; }

 private:
  static std::size_t row(StateId q) { return static_cast<std::size_t>(q); }

  Alphabet alphabet_;
  StateId initial_;
  std::size_t num_states_;
  std::vector<StateId> transitions_;
  std::vector<double> emissions_;
};

/// λ(q, x) for a prefix, or λ(q, x□) when `terminated`. Undefined steps give 0.
double string_probability(const Pdfa& pdfa, StateId q, std::span<const SymbolId> word,
                          bool terminated);

/// Default cap on the length of a sampled string.
inline constexpr std::size_t kDefaultSampleLengthCap = 1'000'000;

/// Samples one string (stop symbol excluded) from state `initial()`.
/// Throws Error when `length_cap` symbols are emitted without stopping.
std::vector<SymbolId> sample_string(const Pdfa& pdfa, Rng& rng,
                                    std::size_t length_cap = kDefaultSampleLengthCap);

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

struct PrefixGap {
  double value = 0.0;
  /// False when the enumeration cap cut the search; `value` is then a lower bound.
  bool complete = true;
  std::uint64_t visited = 0;
};

/// max over |x| ≤ horizon of |λ(q1,x) − λ(q2,x)|, exact branch-and-bound search.
/// Never throws on the cap; see `prefix_distance` for the throwing variant.
PrefixGap prefix_gap(const Pdfa& pdfa, StateId q1, StateId q2, std::size_t horizon,
                     std::uint64_t enumeration_cap = kDefaultEnumerationCap);

/// As prefix_gap but throws Error (advising a smaller horizon) when the cap is hit.
double prefix_distance(const Pdfa& pdfa, StateId q1, StateId q2, std::size_t horizon,
                       std::uint64_t enumeration_cap = kDefaultEnumerationCap);

struct WellFormedReport {
  bool ok = true;
  std::vector<std::string> violations;
  explicit operator bool() const noexcept { return ok; }
};

/// Checks the three PDFA conditions; each violation names its state.
WellFormedReport pdfa_well_formed(const Pdfa& pdfa, double tolerance = kProbabilityTolerance);

/// Outcome of the transition-preserving isomorphism search between two PDFA.
struct PdfaMatch {
  enum class Status { kMatched, kStructural, kEmission };
  Status status = Status::kMatched;
  /// mapping[q] = matched state of the second automaton, kNoState if unreachable.
  std::vector<StateId> mapping;
  std::string failure;
  explicit operator bool() const noexcept { return status == Status::kMatched; }
};

/// Searches for φ with |λ1(q,σ) − λ2(φ(q),σ)| < alpha on every symbol (stop
/// included) and λ1(q,σ) = 0 ⇒ λ2(φ(q),σ) = 0. Symbols are matched by token.
PdfaMatch pdfa_approximation_check(const Pdfa& reference, const Pdfa& candidate, double alpha);

/// States reachable from the initial state through positive-probability symbols.
std::vector<bool> reachable_states(const Pdfa& pdfa);

}  // namespace rdpkit
