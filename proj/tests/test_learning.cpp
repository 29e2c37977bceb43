#include <doctest.h>

#include <cmath>

#include "rdpkit/learning.hpp"
#include "rdpkit/pdfa.hpp"
#include "rdpkit/random.hpp"
#include "rdpkit/rdp.hpp"
#include "support.hpp"

using namespace rdpkit;

namespace {

SampleSet sample(const Pdfa& pdfa, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  SampleSet x;
  std::vector<std::string> word;
  for (std::size_t i = 0; i < n; ++i) {
    word.clear();
    for (SymbolId s : sample_string(pdfa, rng)) word.push_back(pdfa.alphabet().token(s));
    x.add(word);
  }
  return x;
}

std::vector<SymbolId> ids(SampleSet& x, std::initializer_list<const char*> tokens) {
  std::vector<SymbolId> out;
  for (const char* t : tokens) out.push_back(x.intern(t));
  return out;
}

}  // namespace

TEST_CASE("prefix tree counts") {
  SUBCASE("empty sample") {
    PrefixTree t = build_prefix_tree(SampleSet{});
    CHECK(t.num_nodes() == 1);
    CHECK(t.visits(PrefixTree::kRoot) == 0);
    CHECK(t.ends(PrefixTree::kRoot) == 0);
  }
  SUBCASE("only the empty string") {
    SampleSet x;
    x.add(std::vector<std::string>{});
    PrefixTree t = build_prefix_tree(x);
    CHECK(t.ends(PrefixTree::kRoot) == 1);
    CHECK(t.visits(PrefixTree::kRoot) == 1);
  }
  SUBCASE("a and ab") {
    SampleSet x;
    x.add(std::vector<std::string>{"a"});
    x.add(std::vector<std::string>{"a", "b"});
    CHECK(x.total_symbols() == 3);
    PrefixTree t = build_prefix_tree(x);
    const SymbolId a = 0, b = 1;
    CHECK(t.count(PrefixTree::kRoot, a) == 2);
    const auto na = t.child(PrefixTree::kRoot, a);
    REQUIRE(na != PrefixTree::kNoNode);
    CHECK(t.ends(na) == 1);
    CHECK(t.count(na, b) == 1);
    CHECK(t.child(na, a) == PrefixTree::kNoNode);
  }
  SUBCASE("visits balance") {
    Pdfa p = test::make_pdfa({"a", "b"}, {{{{"a", 0.4, 1}, {"b", 0.3, 0}}, 0.3}, {{{"a", 0.5, 0}}, 0.5}});
    PrefixTree t = build_prefix_tree(sample(p, 500, 3));
    for (PrefixTree::NodeId v = 0; v < t.num_nodes(); ++v) {
      std::uint64_t below = t.ends(v);
      for (const auto& c : t.children(v)) below += t.visits(c.node);
      CHECK(below == t.visits(v));
    }
  }
}

TEST_CASE("similarity test") {
  const double delta0 = 0.01;
  SampleSet x;
  auto add_many = [&](std::initializer_list<const char*> tokens, int times) {
    for (int i = 0; i < times; ++i) x.add_ids(ids(x, tokens));
  };
  // Subtrees under "p" and "q" carry (0.9, 0.1) and (0.1, 0.9) next-symbol
  // distributions; under "r" the same counts as "p".
  add_many({"p", "a"}, 900);
  add_many({"p", "b"}, 100);
  add_many({"q", "a"}, 100);
  add_many({"q", "b"}, 900);
  add_many({"r", "a"}, 900);
  add_many({"r", "b"}, 100);
  add_many({"s", "a"}, 2);
  add_many({"s", "b"}, 1);
  PrefixTree t = build_prefix_tree(x);
  auto node = [&](const char* tok) { return t.child(PrefixTree::kRoot, x.intern(tok)); };
  const std::vector<PrefixTree::NodeId> p = {node("p")}, q = {node("q")}, r = {node("r")}, s = {node("s")};

  CHECK(test_similar(t, p, r, delta0).verdict == Similarity::kSimilar);
  auto distinct = test_similar(t, p, q, delta0);
  CHECK(distinct.verdict == Similarity::kDistinct);
  CHECK(distinct.score > 1.0);
  CHECK(test_similar(t, s, p, delta0).verdict == Similarity::kInsufficient);
  CHECK(test_similar(t, p, s, delta0).verdict == Similarity::kInsufficient);
}

TEST_CASE("learner recovers a one-state pdfa") {
  Pdfa truth = test::make_pdfa({"a"}, {{{{"a", 0.6, 0}}, 0.4}});
  LearnerConfig cfg;
  cfg.n_hat = 3;
  LearnResult r = learn_pdfa(sample(truth, 50000, 17), cfg);
  REQUIRE(r.pdfa.num_states() == 1);
  CHECK(std::abs(r.pdfa.emission(0, 0) - 0.6) <= 0.02);
  CHECK(std::abs(r.pdfa.stop_probability(0) - 0.4) <= 0.02);
  CHECK(pdfa_well_formed(r.pdfa));
}

TEST_CASE("learner on empty strings only") {
  SampleSet x;
  for (int i = 0; i < 100; ++i) x.add(std::vector<std::string>{});
  LearnResult r = learn_pdfa(x, LearnerConfig{});
  CHECK(r.pdfa.num_states() == 1);
  CHECK(r.pdfa.stop_probability(0) == 1.0);
  CHECK_THROWS_AS(learn_pdfa(SampleSet{}, LearnerConfig{}), Error);
}

TEST_CASE("learner recovers a three-state cycle") {
  Pdfa truth = test::make_pdfa({"a", "b"}, {{{{"a", 0.75, 1}, {"b", 0.15, 0}}, 0.1},
                                            {{{"a", 0.4, 2}, {"b", 0.5, 1}}, 0.1},
                                            {{{"a", 0.05, 0}, {"b", 0.6, 2}}, 0.35}});
  for (StateId a = 0; a < 3; ++a) {
    for (StateId b = a + 1; b < 3; ++b) CHECK(prefix_distance(truth, a, b, 3) >= 0.3);
  }
  LearnerConfig cfg;
  cfg.n_hat = 4;
  LearnResult r = learn_pdfa(sample(truth, 50000, 5), cfg);
  CHECK(pdfa_approximation_check(truth, r.pdfa, 0.05));
}

TEST_CASE("learner contract on grid data") {
  // Always well-formed, bounded by n_hat and covering every sample string.
  Rdp rdp = test::grid(2);
  Pdfa truth = rdp_to_pdfa(rdp, 1.0 / 41.0);
  for (std::size_t n_hat : {1, 2, 4}) {
    SampleSet x = sample(truth, 300, n_hat);
    LearnerConfig cfg;
    cfg.n_hat = n_hat;
    LearnResult r = learn_pdfa(x, cfg);
    CHECK(r.pdfa.num_states() <= n_hat);
    CHECK(pdfa_well_formed(r.pdfa));
    Alphabet learned = r.pdfa.alphabet();
    for (const auto& w : x.strings()) {
      std::vector<SymbolId> mapped;
      for (SymbolId s : w) mapped.push_back(learned.at(x.tokens()[s]));
      CHECK(string_probability(r.pdfa, r.pdfa.initial(), mapped, true) > 0.0);
    }
  }
}

TEST_CASE("per-test confidence") {
  LearnerConfig cfg;
  cfg.n_hat = 4;
  cfg.delta = 0.1;
  CHECK(per_test_confidence(cfg, 8) == doctest::Approx(0.1 / (4.0 * (32.0 + 8.0 + 1.0))));
}

TEST_CASE("theoretical sample sizes") {
  RdpParameters params;
  params.n = 4;
  params.rho = 0.5;
  params.eta = 0.3;
  params.mu = 0.2;
  SampleSizeInputs in{2, 8, 4, 1.0 / 41.0, 0.1, 0.1, 0.9, 1.0};
  SampleSizes s = theoretical_sample_sizes(params, in);
  // Frozen from a 50-digit evaluation of the closed forms.
  CHECK(s.n1 == 23365812.0);
  CHECK(std::abs(s.n2 / 20675626872112409.0 - 1.0) < 1e-12);
  CHECK(s.delta0 == doctest::Approx(0.1 / (2.0 * 4.0 * 41.0)));

  SUBCASE("the measured grid parameters give the same numbers") {
    RdpParameters measured = compute_parameters(test::grid(2));
    SampleSizes m = theoretical_sample_sizes(measured, in);
    CHECK(m.n1 == s.n1);
  }
  SUBCASE("doubling mu quarters the leading factor") {
    RdpParameters doubled = params;
    doubled.mu = 0.4;
    SampleSizes d = theoretical_sample_sizes(doubled, in);
    const double lead_ratio = (s.n1 / std::log(704.0 * 64 / (0.15 * 0.04 * in.stop_p * s.delta0 * s.delta0))) /
                              (d.n1 / std::log(704.0 * 64 / (0.15 * 0.16 * in.stop_p * d.delta0 * d.delta0)));
    CHECK(lead_ratio == doctest::Approx(4.0).epsilon(1e-6));
  }
  SUBCASE("n2 decreases as epsilon grows") {
    double previous = INFINITY;
    for (double eps : {0.01, 0.05, 0.1, 0.2, 0.5, 1.0}) {
      SampleSizeInputs e = in;
      e.epsilon = eps;
      SampleSizes z = theoretical_sample_sizes(params, e);
      CHECK(z.n2 < previous);
      previous = z.n2;
    }
  }
  SUBCASE("nonpositive parameters") {
    RdpParameters bad = params;
    bad.mu = 0.0;
    CHECK_THROWS_AS(theoretical_sample_sizes(bad, in), Error);
  }
}
