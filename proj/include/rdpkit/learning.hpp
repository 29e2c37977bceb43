#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rdpkit/alphabet.hpp"
#include "rdpkit/pdfa.hpp"
#include "rdpkit/rdp.hpp"

namespace rdpkit {

/// Multiset of strings over an alphabet discovered from the strings themselves.
/// Symbol ids follow first occurrence.
class SampleSet {
 public:
  void add(std::span<const std::string> symbols);
  void add(const std::vector<std::string>& symbols) { add(std::span<const std::string>(symbols)); }

  std::size_t size() const noexcept { return strings_.size(); }
  bool empty() const noexcept { return strings_.empty(); }
  /// ‖X‖: total number of symbols.
  std::size_t total_symbols() const noexcept { return total_symbols_; }
  const std::vector<std::vector<SymbolId>>& strings() const noexcept { return strings_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  Alphabet alphabet() const { return Alphabet(tokens_); }

  /// Interns a symbol, returning its id.
  SymbolId intern(const std::string& token);
  void add_ids(std::vector<SymbolId> word);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, SymbolId> index_;
  std::vector<std::vector<SymbolId>> strings_;
  std::size_t total_symbols_ = 0;
};

/// Frequency prefix tree. Each node counts the strings passing through it
/// (visits) and ending at it (ends); visits = ends + Σ child visits.
class PrefixTree {
 public:
  using NodeId = std::uint32_t;
  static constexpr NodeId kRoot = 0;
  static constexpr NodeId kNoNode = 0xffffffffu;

  struct Child {
    SymbolId symbol;
    NodeId node;
  };

  PrefixTree();

  void add(std::span<const SymbolId> word);

  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  std::uint64_t visits(NodeId v) const { return nodes_[v].visits; }
  std::uint64_t ends(NodeId v) const { return nodes_[v].ends; }
  /// Children sorted by symbol id.
  std::span<const Child> children(NodeId v) const { return nodes_[v].children; }
  NodeId child(NodeId v, SymbolId s) const;
  /// Symbol count of a node's continuation (visits of the child, or 0).
  std::uint64_t count(NodeId v, SymbolId s) const;
  std::size_t num_strings() const noexcept { return nodes_[kRoot].visits; }
  std::size_t total_symbols() const noexcept { return total_symbols_; }

 private:
  struct Node {
    std::uint64_t visits = 0;
    std::uint64_t ends = 0;
    std::vector<Child> children;
  };
  std::vector<Node> nodes_;
  std::size_t total_symbols_ = 0;
};

PrefixTree build_prefix_tree(const SampleSet& x);

struct LearnerConfig {
  /// Upper bound on the number of states.
  std::size_t n_hat = 1;
  /// Expected |Σ| used in the confidence budget; 0 means the observed alphabet size.
  std::size_t alphabet_size = 0;
  double delta = 0.1;
  /// Optional lower bound μ′ on distinguishability; similarity is only declared
  /// once the test can resolve differences of μ′/2.
  std::optional<double> distinguishability_floor;
  std::size_t min_visits = 20;
  std::size_t depth_cap = 8;
  /// When every test against the safe states is inconclusive and no more data
  /// can arrive, promote instead of merging if the best fit's score exceeds
  /// this value and fewer than n̂ states exist. Unset: always merge.
  std::optional<double> forced_split_score;
};

/// Per-test confidence δ0 = δ / (n̂ (n̂|Σ| + |Σ| + 1)).
double per_test_confidence(const LearnerConfig& cfg, std::size_t alphabet_size);

enum class Similarity { kSimilar, kDistinct, kInsufficient };

struct SimilarityOptions {
  std::size_t min_visits = 20;
  std::size_t depth_cap = 8;
  std::optional<double> distinguishability_floor;
};

struct SimilarityResult {
  Similarity verdict = Similarity::kInsufficient;
  /// Largest gap divided by its threshold; > 1 means distinct.
  double score = 0.0;
  std::uint64_t candidate_count = 0;
  std::uint64_t safe_count = 0;
};

/// Hoeffding test on empirical prefix (and terminated-prefix) probabilities of
/// two groups of tree nodes, up to `depth_cap` symbols.
SimilarityResult test_similar(const PrefixTree& tree, std::span<const PrefixTree::NodeId> candidate,
                              std::span<const PrefixTree::NodeId> safe, double delta0,
                              const SimilarityOptions& options = {});

struct LearnResult {
  Pdfa pdfa;
  /// A statistically distinct candidate was merged because n̂ states were in use.
  bool capacity_saturated = false;
  std::size_t similarity_tests = 0;
  /// Candidates below min_visits that were merged by best fit.
  std::size_t low_count_merges = 0;
  /// Inconclusive candidates promoted under `forced_split_score`.
  std::size_t forced_splits = 0;
};

/// State-merging learner over the prefix tree of X. Always returns a
/// well-formed PDFA with at most n̂ states that gives every string of X
/// positive probability. Throws on an empty sample.
LearnResult learn_pdfa(const PrefixTree& tree, const Alphabet& alphabet, const LearnerConfig& cfg);
LearnResult learn_pdfa(const SampleSet& x, const LearnerConfig& cfg);

struct SampleSizeInputs {
  std::size_t num_actions = 0;
  std::size_t alphabet_size = 0;
  std::size_t n_hat = 0;
  double stop_p = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  double gamma = 0.0;
  double rmax = 0.0;
};

struct SampleSizes {
  double epsilon_m = 0.0;
  double epsilon_a = 0.0;
  double delta0 = 0.0;
  double n1 = 0.0;
  double n2 = 0.0;
};

/// The closed forms for N1 and N2 (rounded up), with ε_M, ε_A and δ0.
SampleSizes theoretical_sample_sizes(const RdpParameters& params, const SampleSizeInputs& in);

}  // namespace rdpkit
