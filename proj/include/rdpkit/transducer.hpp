#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdpkit/alphabet.hpp"
#include "rdpkit/common.hpp"

namespace rdpkit {

/// Deterministic Moore machine with a partial transition function.
///
/// Transitions are stored densely, one row of |inputs| targets per state,
/// with kNoState marking undefined entries. Immutable after construction.
template <class Output>
class Transducer {
 public:
  Transducer(Alphabet inputs, StateId initial, std::vector<StateId> transitions,
             std::vector<Output> outputs)
      : inputs_(std::move(inputs)),
        initial_(initial),
        transitions_(std::move(transitions)),
        outputs_(std::move(outputs)) {
    const std::size_t n = outputs_.size();
    if (n == 0) throw Error("transducer needs at least one state");
    if (initial_ >= n) throw Error("initial state " + std::to_string(initial_) + " out of range");
    if (transitions_.size() != n * inputs_.size()) {
      throw Error("transition table has " + std::to_string(transitions_.size()) +
                  " entries, expected " + std::to_string(n * inputs_.size()));
    }
    for (std::size_t i = 0; i < transitions_.size(); ++i) {
      if (transitions_[i] != kNoState && transitions_[i] >= n) {
        throw Error("state " + std::to_string(i / inputs_.size()) + " has a transition to " +
                    std::to_string(transitions_[i]) + ", which is not a state");
      }
    }
  }

  std::size_t num_states() const noexcept { return outputs_.size(); }
  StateId initial() const noexcept { return initial_; }
  const Alphabet& inputs() const noexcept { return inputs_; }

  StateId next(StateId q, SymbolId s) const {
    if (q == kNoState) return kNoState;
    return transitions_[static_cast<std::size_t>(q) * inputs_.size() + s];
  }

  /// Extended transition; undefined steps propagate as kNoState.
  StateId run(StateId q, std::span<const SymbolId> word) const {
    for (SymbolId s : word) {
      q = next(q, s);
      if (q == kNoState) break;
    }
    return q;
  }

  const Output& output(StateId q) const { return outputs_.at(q); }
  const std::vector<Output>& outputs() const noexcept { return outputs_; }
  const std::vector<StateId>& transitions() const noexcept { return transitions_; }

 private:
  Alphabet inputs_;
  StateId initial_;
  std::vector<StateId> transitions_;
  std::vector<Output> outputs_;
};

/// Extended transition for any automaton exposing `run`.
template <class Automaton>
StateId extended_transition(const Automaton& aut, StateId q, std::span<const SymbolId> word) {
  return aut.run(q, word);
}

}  // namespace rdpkit
