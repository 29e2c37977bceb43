#include "rdpkit/learning.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace rdpkit {

SymbolId SampleSet::intern(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, static_cast<SymbolId>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

void SampleSet::add(std::span<const std::string> symbols) {
  std::vector<SymbolId> word;
  word.reserve(symbols.size());
  for (const auto& s : symbols) word.push_back(intern(s));
  add_ids(std::move(word));
}

void SampleSet::add_ids(std::vector<SymbolId> word) {
  for (SymbolId s : word) {
    if (s >= tokens_.size()) throw Error("sample symbol id out of range");
  }
  total_symbols_ += word.size();
  strings_.push_back(std::move(word));
}

PrefixTree::PrefixTree() : nodes_(1) {}

PrefixTree::NodeId PrefixTree::child(NodeId v, SymbolId s) const {
  const auto& kids = nodes_[v].children;
  auto it = std::lower_bound(kids.begin(), kids.end(), s,
                             [](const Child& c, SymbolId x) { return c.symbol < x; });
  return it != kids.end() && it->symbol == s ? it->node : kNoNode;
}

std::uint64_t PrefixTree::count(NodeId v, SymbolId s) const {
  const NodeId c = child(v, s);
  return c == kNoNode ? 0 : nodes_[c].visits;
}

void PrefixTree::add(std::span<const SymbolId> word) {
  NodeId v = kRoot;
  ++nodes_[v].visits;
  for (SymbolId s : word) {
    auto& kids = nodes_[v].children;
    auto it = std::lower_bound(kids.begin(), kids.end(), s,
                               [](const Child& c, SymbolId x) { return c.symbol < x; });
    NodeId next;
    if (it != kids.end() && it->symbol == s) {
      next = it->node;
    } else {
      next = static_cast<NodeId>(nodes_.size());
      kids.insert(it, Child{s, next});
      nodes_.emplace_back();
    }
    v = next;
    ++nodes_[v].visits;
  }
  ++nodes_[v].ends;
  total_symbols_ += word.size();
}

PrefixTree build_prefix_tree(const SampleSet& x) {
  PrefixTree tree;
  for (const auto& w : x.strings()) tree.add(w);
  return tree;
}

double per_test_confidence(const LearnerConfig& cfg, std::size_t alphabet_size) {
  const double n = static_cast<double>(cfg.n_hat);
  const double sigma = static_cast<double>(cfg.alphabet_size ? cfg.alphabet_size : alphabet_size);
  return cfg.delta / (n * (n * sigma + sigma + 1.0));
}

namespace {

using NodeId = PrefixTree::NodeId;

struct GroupView {
  std::span<const NodeId> nodes;
  std::uint64_t total = 0;
};

GroupView view_of(const PrefixTree& tree, std::span<const NodeId> nodes) {
  GroupView g{nodes, 0};
  for (NodeId v : nodes) g.total += tree.visits(v);
  return g;
}

double hoeffding(double k, double delta0, double n) {
  return std::sqrt(std::log(8.0 * k / delta0) / (2.0 * n));
}

/// Depth-first comparison of prefix probabilities. Gaps are collected first
/// because the threshold depends on how many prefixes were compared.
class PrefixComparison {
 public:
  PrefixComparison(const PrefixTree& tree, const GroupView& c, const GroupView& s, double delta0,
                   const SimilarityOptions& opts)
      : tree_(tree), opts_(opts), delta0_(delta0), nc_(static_cast<double>(c.total)),
        ns_(static_cast<double>(s.total)) {
    // No gap exceeds the larger of the two prefix probabilities, so branches
    // below the smallest possible threshold cannot matter.
    prune_ = threshold(1.0);
  }

  void run(std::span<const NodeId> c, std::span<const NodeId> s) {
    level(c, s, 0);
    threshold_ = threshold(static_cast<double>(std::max<std::size_t>(compared_, 1)));
  }

  double threshold(double k) const { return hoeffding(k, delta0_, nc_) + hoeffding(k, delta0_, ns_); }
  double final_threshold() const noexcept { return threshold_; }
  double score() const noexcept { return max_gap_ / threshold_; }
  bool distinct() const noexcept { return max_gap_ > threshold_; }

 private:
  void compare(std::uint64_t vc, std::uint64_t vs) {
    ++compared_;
    max_gap_ = std::max(max_gap_, std::abs(static_cast<double>(vc) / nc_ - static_cast<double>(vs) / ns_));
  }

  void level(std::span<const NodeId> c, std::span<const NodeId> s, std::size_t depth) {
    std::uint64_t ends_c = 0, ends_s = 0;
    for (NodeId v : c) ends_c += tree_.ends(v);
    for (NodeId v : s) ends_s += tree_.ends(v);
    compare(ends_c, ends_s);
    if (depth == opts_.depth_cap) return;

    struct Bucket {
      std::vector<NodeId> c, s;
      std::uint64_t vc = 0, vs = 0;
    };
    std::map<SymbolId, Bucket> buckets;
    for (NodeId v : c) {
      for (const auto& kid : tree_.children(v)) {
        Bucket& b = buckets[kid.symbol];
        b.c.push_back(kid.node);
        b.vc += tree_.visits(kid.node);
      }
    }
    for (NodeId v : s) {
      for (const auto& kid : tree_.children(v)) {
        Bucket& b = buckets[kid.symbol];
        b.s.push_back(kid.node);
        b.vs += tree_.visits(kid.node);
      }
    }
    for (const auto& [sym, b] : buckets) compare(b.vc, b.vs);
    for (const auto& [sym, b] : buckets) {
      // Once a side is empty no extension can beat the gap just recorded.
      if (b.vc == 0 || b.vs == 0) continue;
      const double high = std::max(static_cast<double>(b.vc) / nc_, static_cast<double>(b.vs) / ns_);
      if (high <= prune_) continue;
      level(b.c, b.s, depth + 1);
    }
  }

  const PrefixTree& tree_;
  const SimilarityOptions& opts_;
  double delta0_;
  double nc_, ns_;
  double prune_ = 0.0;
  double threshold_ = 1.0;
  double max_gap_ = 0.0;
  std::size_t compared_ = 0;
};

SimilarityResult compare_groups(const PrefixTree& tree, const GroupView& c, const GroupView& s,
                                double delta0, const SimilarityOptions& opts) {
  SimilarityResult result;
  result.candidate_count = c.total;
  result.safe_count = s.total;
  if (c.total == 0 || s.total == 0) return result;
  PrefixComparison cmp(tree, c, s, delta0, opts);
  cmp.run(c.nodes, s.nodes);
  result.score = cmp.score();
  if (cmp.distinct()) {
    result.verdict = Similarity::kDistinct;
  } else if (c.total >= opts.min_visits && s.total >= opts.min_visits &&
             (!opts.distinguishability_floor || cmp.final_threshold() <= *opts.distinguishability_floor / 2.0)) {
    result.verdict = Similarity::kSimilar;
  }
  return result;
}

}  // namespace

SimilarityResult test_similar(const PrefixTree& tree, std::span<const NodeId> candidate,
                              std::span<const NodeId> safe, double delta0,
                              const SimilarityOptions& options) {
  if (!(delta0 > 0.0 && delta0 < 1.0)) throw Error("test_similar: confidence must lie in (0,1)");
  return compare_groups(tree, view_of(tree, candidate), view_of(tree, safe), delta0, options);
}

namespace {

class Learner {
 public:
  Learner(const PrefixTree& tree, const Alphabet& alphabet, const LearnerConfig& cfg)
      : tree_(tree), alphabet_(alphabet), cfg_(cfg), sigma_(alphabet.size()) {
    delta0_ = per_test_confidence(cfg, sigma_);
    opts_.min_visits = cfg.min_visits;
    opts_.depth_cap = cfg.depth_cap;
    opts_.distinguishability_floor = cfg.distinguishability_floor;
  }

  LearnResult run() {
    add_safe({});
    absorb(0, PrefixTree::kRoot);
    while (!frontier_.empty()) {
      auto [it, forced] = pick();
      const Key key = it->first;
      Pending& entry = it->second;
      std::vector<double> scores;
      const Decision d = decide(entry, forced, scores);
      if (d.kind == Decision::kDefer) {
        entry.deferred_at = entry.total;
        continue;
      }
      const std::vector<NodeId> nodes = std::move(entry.nodes);
      frontier_.erase(it);
      StateId target = d.target;
      if (d.kind == Decision::kPromote) {
        std::vector<SymbolId> access = safe_[key.first].access;
        access.push_back(key.second);
        target = add_safe(std::move(access));
      }
      trans_[key.first * sigma_ + key.second] = target;
      for (NodeId v : nodes) absorb(target, v);
    }
    return finish();
  }

 private:
  using Key = std::pair<StateId, SymbolId>;
  struct Safe {
    std::vector<NodeId> nodes;
    std::uint64_t total = 0;
    std::uint64_t ends = 0;
    std::vector<std::uint64_t> counts;
    std::vector<SymbolId> access;
  };
  struct Pending {
    std::vector<NodeId> nodes;
    std::uint64_t total = 0;
    /// Count at which the last test was inconclusive; retried once the group grows.
    std::uint64_t deferred_at = 0;
  };
  struct Decision {
    enum Kind { kMerge, kPromote, kDefer } kind;
    StateId target = kNoState;
  };

  StateId add_safe(std::vector<SymbolId> access) {
    Safe s;
    s.counts.assign(sigma_, 0);
    s.access = std::move(access);
    safe_.push_back(std::move(s));
    trans_.resize(safe_.size() * sigma_, kNoState);
    return static_cast<StateId>(safe_.size() - 1);
  }

  void absorb(StateId target, NodeId root) {
    std::vector<std::pair<StateId, NodeId>> stack{{target, root}};
    while (!stack.empty()) {
      const auto [t, v] = stack.back();
      stack.pop_back();
      Safe& g = safe_[t];
      g.nodes.push_back(v);
      g.total += tree_.visits(v);
      g.ends += tree_.ends(v);
      for (const auto& kid : tree_.children(v)) {
        const std::uint64_t visits = tree_.visits(kid.node);
        g.counts[kid.symbol] += visits;
        const StateId next = trans_[t * sigma_ + kid.symbol];
        if (next != kNoState) {
          stack.emplace_back(next, kid.node);
        } else {
          Pending& p = frontier_[{t, kid.symbol}];
          p.nodes.push_back(kid.node);
          p.total += visits;
        }
      }
    }
  }

  /// Lexicographic order of the access strings of two frontier keys.
  bool access_less(const Key& a, const Key& b) const {
    auto token_seq = [&](const Key& k) {
      std::vector<const std::string*> seq;
      for (SymbolId s : safe_[k.first].access) seq.push_back(&alphabet_.token(s));
      seq.push_back(&alphabet_.token(k.second));
      return seq;
    };
    const auto sa = token_seq(a), sb = token_seq(b);
    return std::lexicographical_compare(sa.begin(), sa.end(), sb.begin(), sb.end(),
                                        [](const std::string* x, const std::string* y) { return *x < *y; });
  }

  /// Most visited candidate that is large enough and has grown since it was
  /// last deferred; otherwise the most visited remaining one, which must then
  /// be resolved.
  std::pair<std::map<Key, Pending>::iterator, bool> pick() {
    auto better = [&](auto x, auto y) {
      if (x->second.total != y->second.total) return x->second.total > y->second.total;
      return access_less(x->first, y->first);
    };
    auto ready = frontier_.end();
    auto any = frontier_.end();
    for (auto it = frontier_.begin(); it != frontier_.end(); ++it) {
      const Pending& p = it->second;
      if (p.total >= cfg_.min_visits && p.total > p.deferred_at &&
          (ready == frontier_.end() || better(it, ready))) {
        ready = it;
      }
      if (any == frontier_.end() || better(it, any)) any = it;
    }
    return ready != frontier_.end() ? std::make_pair(ready, false) : std::make_pair(any, true);
  }

  SimilarityResult test(const Pending& c, StateId s) {
    ++tests_;
    const Safe& g = safe_[s];
    return compare_groups(tree_, GroupView{c.nodes, c.total}, GroupView{g.nodes, g.total}, delta0_, opts_);
  }

  /// Safe state with the smallest score among `allowed`; ties go to the earliest.
  static StateId best_fit(const std::vector<double>& scores, const std::vector<bool>& allowed) {
    StateId best = kNoState;
    for (StateId s = 0; s < scores.size(); ++s) {
      if (allowed[s] && (best == kNoState || scores[s] < scores[best])) best = s;
    }
    return best;
  }

  Decision decide(const Pending& c, bool forced, std::vector<double>& scores) {
    const std::size_t n = safe_.size();
    std::vector<bool> all(n, true);
    std::vector<bool> undecided(n, false);
    bool any_undecided = false;
    for (StateId s = 0; s < n; ++s) {
      const SimilarityResult r = test(c, s);
      scores.push_back(r.score);
      if (r.verdict == Similarity::kSimilar) return {Decision::kMerge, s};
      if (r.verdict == Similarity::kInsufficient) {
        undecided[s] = true;
        any_undecided = true;
      }
    }
    if (c.total < cfg_.min_visits) {
      ++low_count_merges_;
      return {Decision::kMerge, best_fit(scores, all)};
    }
    if (any_undecided) {
      if (!forced) return {Decision::kDefer};
      const StateId fit = best_fit(scores, undecided);
      if (cfg_.forced_split_score && n < cfg_.n_hat && scores[fit] > *cfg_.forced_split_score) {
        ++forced_splits_;
        return {Decision::kPromote};
      }
      return {Decision::kMerge, fit};
    }
    if (n < cfg_.n_hat) return {Decision::kPromote};
    saturated_ = true;
    return {Decision::kMerge, best_fit(scores, all)};
  }

  LearnResult finish() {
    const std::size_t n = safe_.size();
    std::vector<double> emissions(n * (sigma_ + 1), 0.0);
    for (std::size_t q = 0; q < n; ++q) {
      const Safe& g = safe_[q];
      const double total = static_cast<double>(g.total);
      for (std::size_t s = 0; s < sigma_; ++s) {
        emissions[q * (sigma_ + 1) + s] = static_cast<double>(g.counts[s]) / total;
      }
      emissions[q * (sigma_ + 1) + sigma_] = static_cast<double>(g.ends) / total;
    }
    LearnResult result{Pdfa(alphabet_, 0, trans_, std::move(emissions)), saturated_, tests_,
                       low_count_merges_, forced_splits_};
    return result;
  }

  const PrefixTree& tree_;
  const Alphabet& alphabet_;
  const LearnerConfig& cfg_;
  std::size_t sigma_;
  double delta0_ = 0.0;
  SimilarityOptions opts_;
  std::vector<Safe> safe_;
  std::vector<StateId> trans_;
  std::map<Key, Pending> frontier_;
  bool saturated_ = false;
  std::size_t tests_ = 0;
  std::size_t low_count_merges_ = 0;
  std::size_t forced_splits_ = 0;
};

}  // namespace

LearnResult learn_pdfa(const PrefixTree& tree, const Alphabet& alphabet, const LearnerConfig& cfg) {
  if (cfg.n_hat < 1) throw Error("learner: n_hat must be at least 1");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw Error("learner: delta must lie in (0,1)");
  if (cfg.depth_cap < 1) throw Error("learner: depth cap must be at least 1");
  if (tree.num_strings() == 0) throw Error("learner: empty sample");
  return Learner(tree, alphabet, cfg).run();
}

LearnResult learn_pdfa(const SampleSet& x, const LearnerConfig& cfg) {
  if (x.empty()) throw Error("learner: empty sample");
  return learn_pdfa(build_prefix_tree(x), x.alphabet(), cfg);
}

SampleSizes theoretical_sample_sizes(const RdpParameters& params, const SampleSizeInputs& in) {
  const double values[] = {static_cast<double>(params.n), params.rho, params.mu, params.eta,
                           static_cast<double>(in.num_actions), static_cast<double>(in.alphabet_size),
                           static_cast<double>(in.n_hat), in.stop_p, in.epsilon, in.delta, in.gamma,
                           in.rmax};
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error("theoretical_sample_sizes: every parameter must be positive");
  }
  if (in.stop_p >= 1.0 || in.delta >= 1.0 || in.gamma >= 1.0) {
    throw Error("theoretical_sample_sizes: p, delta and gamma must be below 1");
  }
  const double a = static_cast<double>(in.num_actions);
  const double sigma = static_cast<double>(in.alphabet_size);
  const double nh = static_cast<double>(in.n_hat);
  const double n = static_cast<double>(params.n);
  const double p = in.stop_p;
  const double rho_eta = params.rho * params.eta;
  const double mu2 = params.mu * params.mu;

  SampleSizes out;
  out.epsilon_m = std::pow(1.0 - in.gamma, 3) * in.epsilon / (3.0 * in.rmax);
  out.epsilon_a = (1.0 - p) * out.epsilon_m / (a * n * sigma);
  out.delta0 = in.delta / (2.0 * nh * (nh * sigma + sigma + 1.0));
  out.n1 = std::ceil(22.0 * std::numbers::e * a * nh * sigma / (rho_eta * (1.0 - p) * mu2) *
                     std::log(704.0 * a * nh * sigma / (rho_eta * mu2 * p * out.delta0 * out.delta0)));
  out.n2 = std::ceil(nh * sigma * a / (0.9 * rho_eta * (1.0 - p) * out.epsilon_a * out.epsilon_a) *
                     std::log(2.0 * (sigma + 1.0) / out.delta0));
  return out;
}

}  // namespace rdpkit
