#include "rdpkit/pdfa.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace rdpkit {

Pdfa::Pdfa(Alphabet alphabet, StateId initial, std::vector<StateId> transitions,
           std::vector<double> emissions)
    : alphabet_(std::move(alphabet)),
      initial_(initial),
      num_states_(0),
      transitions_(std::move(transitions)),
      emissions_(std::move(emissions)) {
  const std::size_t width = alphabet_.size() + 1;
  if (emissions_.empty() || emissions_.size() % width != 0) {
    throw Error("emission table size " + std::to_string(emissions_.size()) +
                " is not a positive multiple of |alphabet|+1");
  }
  num_states_ = emissions_.size() / width;
  if (transitions_.size() != num_states_ * alphabet_.size()) {
    throw Error("transition table does not match the emission table");
  }
  if (initial_ >= num_states_) throw Error("initial state out of range");
  for (std::size_t i = 0; i < transitions_.size(); ++i) {
    if (transitions_[i] != kNoState && transitions_[i] >= num_states_) {
      throw Error("state " + std::to_string(i / alphabet_.size()) +
                  " has a transition to a missing state");
    }
  }
  for (double e : emissions_) {
    if (!std::isfinite(e)) throw Error("non-finite emission probability");
  }
}

StateId Pdfa::run(StateId q, std::span<const SymbolId> word) const {
  for (SymbolId s : word) {
    q = next(q, s);
    if (q == kNoState) break;
  }
  return q;
}

double string_probability(const Pdfa& pdfa, StateId q, std::span<const SymbolId> word,
                          bool terminated) {
  double prob = 1.0;
  for (SymbolId s : word) {
    if (pdfa.next(q, s) == kNoState) return 0.0;
    prob *= pdfa.emission(q, s);
    q = pdfa.next(q, s);
  }
  if (terminated) prob *= pdfa.stop_probability(q);
  return prob;
}

std::vector<SymbolId> sample_string(const Pdfa& pdfa, Rng& rng, std::size_t length_cap) {
  const std::size_t width = pdfa.alphabet().size() + 1;
  std::vector<SymbolId> out;
  StateId q = pdfa.initial();
  for (;;) {
    std::span<const double> row(pdfa.emissions().data() + q * width, width);
    const std::size_t pick = rng.categorical(row);
    if (pick == width - 1) return out;
    if (out.size() >= length_cap) {
      throw Error("sampled string exceeded " + std::to_string(length_cap) +
                  " symbols; the automaton is (near-)non-terminating");
    }
    out.push_back(static_cast<SymbolId>(pick));
    q = pdfa.next(q, static_cast<SymbolId>(pick));
    if (q == kNoState) throw Error("sampled a symbol with no transition");
  }
}

namespace {

struct GapSearch {
  const Pdfa& pdfa;
  std::size_t horizon;
  std::uint64_t cap;
  PrefixGap result;

  void visit(StateId a, StateId b, double pa, double pb, std::size_t depth) {
    if (result.visited >= cap) {
      result.complete = false;
      return;
    }
    ++result.visited;
    const double gap = std::abs(pa - pb);
    const double bound = std::max(pa, pb);
    // Every extension has gap at most max(pa, pb), and at most the current gap
    // once one side is zero.
    const bool improvable = bound > result.value && pa > 0.0 && pb > 0.0;
    result.value = std::max(result.value, gap);
    if (depth == horizon || !improvable) return;
    for (SymbolId s = 0; s < pdfa.alphabet().size(); ++s) {
      const StateId na = pdfa.next(a, s);
      const StateId nb = pdfa.next(b, s);
      const double qa = na == kNoState ? 0.0 : pa * pdfa.emission(a, s);
      const double qb = nb == kNoState ? 0.0 : pb * pdfa.emission(b, s);
      if (qa == 0.0 && qb == 0.0) continue;
      visit(na, nb, qa, qb, depth + 1);
      if (!result.complete) return;
    }
  }
};

}  // namespace

PrefixGap prefix_gap(const Pdfa& pdfa, StateId q1, StateId q2, std::size_t horizon,
                     std::uint64_t enumeration_cap) {
  if (q1 >= pdfa.num_states() || q2 >= pdfa.num_states()) throw Error("state out of range");
  GapSearch search{pdfa, horizon, enumeration_cap, {}};
  if (q1 != q2) search.visit(q1, q2, 1.0, 1.0, 0);
  return search.result;
}

double prefix_distance(const Pdfa& pdfa, StateId q1, StateId q2, std::size_t horizon,
                       std::uint64_t enumeration_cap) {
  if (horizon < 1) throw Error("prefix_distance: horizon must be at least 1");
  PrefixGap gap = prefix_gap(pdfa, q1, q2, horizon, enumeration_cap);
  if (!gap.complete) {
    throw Error("prefix_distance: enumeration cap of " + std::to_string(enumeration_cap) +
                " strings exceeded at horizon " + std::to_string(horizon) +
                "; use a smaller horizon");
  }
  return gap.value;
}

std::vector<bool> reachable_states(const Pdfa& pdfa) {
  std::vector<bool> seen(pdfa.num_states(), false);
  std::deque<StateId> queue{pdfa.initial()};
  seen[pdfa.initial()] = true;
  while (!queue.empty()) {
    const StateId q = queue.front();
    queue.pop_front();
    for (SymbolId s = 0; s < pdfa.alphabet().size(); ++s) {
      const StateId t = pdfa.next(q, s);
      if (t == kNoState || pdfa.emission(q, s) <= 0.0 || seen[t]) continue;
      seen[t] = true;
      queue.push_back(t);
    }
  }
  return seen;
}

WellFormedReport pdfa_well_formed(const Pdfa& pdfa, double tolerance) {
  WellFormedReport report;
  auto fail = [&](const std::string& msg) {
    report.ok = false;
    report.violations.push_back(msg);
  };
  const std::size_t n = pdfa.num_states();
  const std::size_t sigma = pdfa.alphabet().size();
  for (StateId q = 0; q < n; ++q) {
    double sum = pdfa.stop_probability(q);
    if (sum < 0.0 || sum > 1.0) fail("state " + std::to_string(q) + ": stop probability out of [0,1]");
    for (SymbolId s = 0; s < sigma; ++s) {
      const double e = pdfa.emission(q, s);
      sum += e;
      if (e < 0.0 || e > 1.0) {
        fail("state " + std::to_string(q) + ": emission of '" + pdfa.alphabet().token(s) +
             "' out of [0,1]");
      }
      if (e != 0.0 && pdfa.next(q, s) == kNoState) {
        fail("state " + std::to_string(q) + ": symbol '" + pdfa.alphabet().token(s) +
             "' has positive probability but no transition");
      }
    }
    if (std::abs(sum - 1.0) > tolerance) {
      std::ostringstream msg;
      msg << "state " << q << ": emissions sum to " << sum << ", not 1";
      fail(msg.str());
    }
  }

  // Condition (iii): backward closure from stopping states over positive edges.
  std::vector<std::vector<StateId>> reverse(n);
  for (StateId q = 0; q < n; ++q) {
    for (SymbolId s = 0; s < sigma; ++s) {
      const StateId t = pdfa.next(q, s);
      if (t != kNoState && pdfa.emission(q, s) > 0.0) reverse[t].push_back(q);
    }
  }
  std::vector<bool> can_stop(n, false);
  std::deque<StateId> queue;
  for (StateId q = 0; q < n; ++q) {
    if (pdfa.stop_probability(q) > 0.0) {
      can_stop[q] = true;
      queue.push_back(q);
    }
  }
  while (!queue.empty()) {
    const StateId q = queue.front();
    queue.pop_front();
    for (StateId p : reverse[q]) {
      if (!can_stop[p]) {
        can_stop[p] = true;
        queue.push_back(p);
      }
    }
  }
  const std::vector<bool> reach = reachable_states(pdfa);
  for (StateId q = 0; q < n; ++q) {
    if (reach[q] && !can_stop[q]) {
      fail("state " + std::to_string(q) + ": reachable but cannot reach a stopping state");
    }
  }
  return report;
}

PdfaMatch pdfa_approximation_check(const Pdfa& reference, const Pdfa& candidate, double alpha) {
  PdfaMatch match;
  auto fail = [&](PdfaMatch::Status status, std::string msg) {
    match.status = status;
    match.failure = std::move(msg);
    return match;
  };

  const std::vector<bool> reach_ref = reachable_states(reference);
  const std::vector<bool> reach_cand = reachable_states(candidate);
  const auto count_ref = std::count(reach_ref.begin(), reach_ref.end(), true);
  const auto count_cand = std::count(reach_cand.begin(), reach_cand.end(), true);
  if (count_ref != count_cand) {
    return fail(PdfaMatch::Status::kStructural,
                "reachable state counts differ: " + std::to_string(count_ref) + " vs " +
                    std::to_string(count_cand));
  }

  // Union of tokens; a token missing from one side has probability zero there.
  std::vector<std::string> tokens = reference.alphabet().tokens();
  for (const auto& t : candidate.alphabet().tokens()) {
    if (!reference.alphabet().find(t)) tokens.push_back(t);
  }
  struct SymbolPair {
    std::optional<SymbolId> ref, cand;
  };
  std::vector<SymbolPair> symbols;
  symbols.reserve(tokens.size());
  for (const auto& t : tokens) symbols.push_back({reference.alphabet().find(t), candidate.alphabet().find(t)});

  auto prob = [](const Pdfa& p, StateId q, std::optional<SymbolId> s) {
    if (!s || p.next(q, *s) == kNoState) return 0.0;
    return p.emission(q, *s);
  };

  match.mapping.assign(reference.num_states(), kNoState);
  std::vector<StateId> inverse(candidate.num_states(), kNoState);
  std::deque<StateId> queue{reference.initial()};
  match.mapping[reference.initial()] = candidate.initial();
  inverse[candidate.initial()] = reference.initial();

  while (!queue.empty()) {
    const StateId q = queue.front();
    queue.pop_front();
    const StateId c = match.mapping[q];
    const double stop_gap = std::abs(reference.stop_probability(q) - candidate.stop_probability(c));
    if (!(stop_gap < alpha) ||
        (reference.stop_probability(q) == 0.0 && candidate.stop_probability(c) != 0.0)) {
      return fail(PdfaMatch::Status::kEmission,
                  "stop probability of state " + std::to_string(q) + " differs by " +
                      std::to_string(stop_gap));
    }
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      const double pr = prob(reference, q, symbols[i].ref);
      const double pc = prob(candidate, c, symbols[i].cand);
      if (!(std::abs(pr - pc) < alpha) || (pr == 0.0 && pc != 0.0)) {
        std::ostringstream msg;
        msg << "emission of '" << tokens[i] << "' at state " << q << ": " << pr << " vs " << pc;
        return fail(PdfaMatch::Status::kEmission, msg.str());
      }
      if (pr == 0.0) continue;
      const StateId tq = reference.next(q, *symbols[i].ref);
      const StateId tc = candidate.next(c, *symbols[i].cand);
      if (match.mapping[tq] == kNoState && inverse[tc] == kNoState) {
        match.mapping[tq] = tc;
        inverse[tc] = tq;
        queue.push_back(tq);
      } else if (match.mapping[tq] != tc || inverse[tc] != tq) {
        return fail(PdfaMatch::Status::kStructural,
                    "transition on '" + tokens[i] + "' from state " + std::to_string(q) +
                        " breaks the state bijection");
      }
    }
  }
  return match;
}

}  // namespace rdpkit
