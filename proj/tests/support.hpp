#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <unistd.h>

#include "rdpkit/environments.hpp"
#include "rdpkit/mdp.hpp"
#include "rdpkit/pdfa.hpp"
#include "rdpkit/rdp.hpp"

namespace rdpkit::test {

inline GridSpec uniform_grid(std::size_t m, double p0 = 0.7, double p1 = 0.3, double gamma = 0.9) {
  GridSpec spec;
  spec.m = m;
  spec.p0.assign(m, p0);
  spec.p1.assign(m, p1);
  spec.gamma = gamma;
  return spec;
}

inline Rdp grid(std::size_t m, double p0 = 0.7, double p1 = 0.3) { return make_grid_rdp(uniform_grid(m, p0, p1)); }

/// Builds a PDFA from per-state rows of (symbol token, probability, target)
/// plus a stop probability.
struct PdfaRow {
  std::vector<std::tuple<std::string, double, StateId>> edges;
  double stop = 0.0;
};

inline Pdfa make_pdfa(const std::vector<std::string>& symbols, const std::vector<PdfaRow>& rows) {
  Alphabet alphabet(symbols);
  const std::size_t k = alphabet.size();
  std::vector<StateId> transitions(rows.size() * k, kNoState);
  std::vector<double> emissions(rows.size() * (k + 1), 0.0);
  for (std::size_t q = 0; q < rows.size(); ++q) {
    for (const auto& [token, p, target] : rows[q].edges) {
      const SymbolId s = alphabet.at(token);
      transitions[q * k + s] = target;
      emissions[q * (k + 1) + s] = p;
    }
    emissions[q * (k + 1) + k] = rows[q].stop;
  }
  return Pdfa(alphabet, 0, std::move(transitions), std::move(emissions));
}

/// Finite-horizon expectimax over observation histories.
///
/// The next-step distribution comes from `dynamics_at` on the full history,
/// which is the process definition and does not consult any solver. Results
/// are memoized on (depth, key(history)) where the key is computed by the
/// caller from the history alone. Every memo hit re-checks the one-step
/// distributions, which catches keys that merge different dynamics states.
class HistoryExpectimax {
 public:
  using Key = std::function<std::int64_t(const std::vector<SymbolId>&)>;

  HistoryExpectimax(const Rdp& rdp, Key key) : rdp_(&rdp), key_(std::move(key)) {}

  double value(std::vector<SymbolId>& history, std::size_t depth) {
    if (depth == 0) return 0.0;
    const auto memo_key = std::make_pair(depth, key_(history));
    const auto signature = row_signature(history);
    if (auto it = memo_.find(memo_key); it != memo_.end()) {
      if (it->second.first != signature) throw Error("expectimax: history key merges different dynamics");
      return it->second.second;
    }
    double best = 0.0;
    for (SymbolId a = 0; a < rdp_->actions().size(); ++a) {
      double q = 0.0;
      for (const Outcome& o : dynamics_at(*rdp_, history, a)) {
        history.push_back(o.observation);
        q += o.probability * (rdp_->reward_value(o.reward) + rdp_->gamma() * value(history, depth - 1));
        history.pop_back();
      }
      best = a == 0 ? q : std::max(best, q);
    }
    memo_.emplace(memo_key, std::make_pair(signature, best));
    return best;
  }

  /// First action of the depth-limited expectimax at the history.
  SymbolId best_action(std::vector<SymbolId>& history, std::size_t depth) {
    SymbolId arg = 0;
    double best = -1.0;
    for (SymbolId a = 0; a < rdp_->actions().size(); ++a) {
      double q = 0.0;
      for (const Outcome& o : dynamics_at(*rdp_, history, a)) {
        history.push_back(o.observation);
        q += o.probability * (rdp_->reward_value(o.reward) + rdp_->gamma() * value(history, depth - 1));
        history.pop_back();
      }
      if (q > best + 1e-12) {
        best = q;
        arg = a;
      }
    }
    return arg;
  }

 private:
  std::vector<std::vector<Outcome>> row_signature(const std::vector<SymbolId>& history) const {
    std::vector<std::vector<Outcome>> rows;
    for (SymbolId a = 0; a < rdp_->actions().size(); ++a) rows.push_back(dynamics_at(*rdp_, history, a));
    return rows;
  }

  const Rdp* rdp_;
  Key key_;
  std::map<std::pair<std::size_t, std::int64_t>, std::pair<std::vector<std::vector<Outcome>>, double>> memo_;
};

/// Grid key: column is fixed by the history length, the swap bit by the
/// parity of enemy sightings.
inline HistoryExpectimax::Key grid_key(const Rdp& rdp) {
  const Alphabet* obs = &rdp.observations();
  return [obs](const std::vector<SymbolId>& h) {
    std::int64_t enemies = 0;
    for (SymbolId s : h) enemies += obs->token(s).ends_with("enemy") ? 1 : 0;
    return static_cast<std::int64_t>(h.size()) * 2 + (enemies & 1);
  };
}

/// Parity key: length plus the parity of the selected bits seen so far.
inline HistoryExpectimax::Key parity_key(std::size_t m, std::uint64_t subset) {
  return [m, subset](const std::vector<SymbolId>& h) {
    std::int64_t parity = 0;
    for (std::size_t i = 0; i < std::min(m, h.size()); ++i) {
      if ((subset >> i) & 1u) parity ^= static_cast<std::int64_t>(h[i]);
    }
    const auto len = static_cast<std::int64_t>(std::min(h.size(), m + 2));
    return len * 2 + parity;
  };
}

/// Random MDP with `n` states, two or three actions and rewards in {0, .25, .5, .75, 1}.
inline Mdp random_mdp(std::mt19937_64& gen, std::size_t n, double gamma) {
  std::uniform_int_distribution<std::size_t> actions_dist(2, 3);
  const std::size_t num_actions = actions_dist(gen);
  std::vector<std::string> action_tokens;
  for (std::size_t a = 0; a < num_actions; ++a) action_tokens.push_back("a" + std::to_string(a));
  Alphabet rewards({"0", "0.25", "0.5", "0.75", "1"});
  std::uniform_int_distribution<std::size_t> state_dist(0, n - 1);
  std::uniform_int_distribution<SymbolId> reward_dist(0, 4);
  std::uniform_int_distribution<std::size_t> branch_dist(1, 3);
  std::uniform_real_distribution<double> weight_dist(0.05, 1.0);
  std::vector<std::vector<MdpTransition>> rows;
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t a = 0; a < num_actions; ++a) {
      const std::size_t k = branch_dist(gen);
      std::vector<MdpTransition> row;
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const double w = weight_dist(gen);
        total += w;
        row.push_back({static_cast<StateId>(state_dist(gen)), reward_dist(gen), w});
      }
      for (auto& t : row) t.probability /= total;
      rows.push_back(std::move(row));
    }
  }
  return Mdp(Alphabet(action_tokens), rewards, gamma, 0, n, std::move(rows));
}

/// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("rdpkit-test-" + name + "-" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace rdpkit::test
