#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rdpkit/environments.hpp"
#include "rdpkit/harness.hpp"
#include "support.hpp"

using namespace rdpkit;

namespace {

PolicyTransducer constant_policy(const Rdp& rdp, SymbolId action) {
  const std::size_t k = rdp.observations().size();
  return PolicyTransducer(Transducer<SymbolId>(rdp.observations(), 0, std::vector<StateId>(k, 0), {action}),
                          rdp.actions());
}

ExperimentConfig ac5_config() {
  ExperimentConfig cfg;
  cfg.algorithm = AlgorithmKind::kAlgorithm2;
  cfg.alg2.n_hat = 4;
  cfg.step_cap = 200'000;
  return cfg;
}

}  // namespace

TEST_CASE("optimality gap") {
  SUBCASE("bandit worst arm") {
    Rdp rdp = make_mab_rdp({0.3, 0.8});
    auto g = optimality_gap(rdp, constant_policy(rdp, 0), 1e-9);
    CHECK(g.gap == doctest::Approx(0.5));
    CHECK(optimality_gap(rdp, constant_policy(rdp, 1), 1e-9).gap == doctest::Approx(0.0));
  }
  SUBCASE("chain with the wrong final action") {
    Rdp rdp = make_chain_rdp(3, 1);
    auto g = optimality_gap(rdp, constant_policy(rdp, 0), 1e-9);
    CHECK(g.policy_value == 0.0);
    CHECK(g.gap == doctest::Approx(g.optimal_value));
    CHECK(g.optimal_value == doctest::Approx(0.81 / 0.1));
  }
  CHECK(default_gap_tolerance(test::grid(2)) == doctest::Approx(1e-3));
  CHECK(default_gap_tolerance(make_mab_rdp({0.3, 0.8}, 0.5)) == doctest::Approx(2e-4));
}

TEST_CASE("spec hash") {
  CHECK(spec_hash(test::grid(2)) == spec_hash(test::grid(2)));
  CHECK(spec_hash(test::grid(2)) != spec_hash(test::grid(3)));
  CHECK(spec_hash(test::grid(2)).size() == 16);
}

TEST_CASE("algorithm names") {
  CHECK(parse_algorithm("alg1") == AlgorithmKind::kAlgorithm1);
  CHECK(parse_algorithm("alg2") == AlgorithmKind::kAlgorithm2);
  CHECK(parse_algorithm("baseline") == AlgorithmKind::kBaseline);
  CHECK_FALSE(parse_algorithm("other").has_value());
  CHECK(std::string(algorithm_name(AlgorithmKind::kBaseline)) == "baseline");
}

TEST_CASE("sustained flags") {
  ExperimentRecord r;
  for (double g : {0.5, 0.05, 0.3, 0.05, 0.02}) {
    EmissionRecord e;
    e.emission_index = r.emissions.size();
    e.action_steps = 100 * (r.emissions.size() + 1);
    e.gap = g;
    r.emissions.push_back(e);
  }
  finalize_record(r, 0.1);
  CHECK(r.success);
  REQUIRE(r.steps_to_sustained.has_value());
  CHECK(*r.steps_to_sustained == 400);
  CHECK_FALSE(r.emissions[1].sustained);
  CHECK(r.emissions[3].sustained);
  CHECK(r.emissions[4].sustained);

  r.emissions.back().gap = 0.2;
  finalize_record(r, 0.1);
  CHECK_FALSE(r.success);
  CHECK_FALSE(r.steps_to_sustained.has_value());
}

TEST_CASE("a loose epsilon succeeds at the first emission") {
  Rdp rdp = test::grid(2);
  ExperimentConfig cfg = ac5_config();
  cfg.epsilon = 100.0;
  cfg.step_cap = 5000;
  ExperimentRecord r = run_experiment(rdp, cfg, 1);
  REQUIRE_FALSE(r.emissions.empty());
  CHECK(r.success);
  CHECK(*r.steps_to_sustained == r.emissions.front().action_steps);
  CHECK(r.spec_hash == spec_hash(rdp));
}

TEST_CASE("experiment csv round trip") {
  Rdp rdp = test::grid(2);
  ExperimentConfig cfg = ac5_config();
  cfg.step_cap = 30000;
  const std::vector<std::uint64_t> seeds = {3, 1, 2};
  auto records = run_pac_experiment(rdp, cfg, seeds);
  REQUIRE(records.size() == 3);
  CHECK(records[0].seed == 1);
  CHECK(records[2].seed == 3);

  const std::string csv = experiment_csv(records);
  std::istringstream in(csv);
  auto back = read_experiment_csv(in);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].seed == records[i].seed);
    CHECK(back[i].spec_hash == records[i].spec_hash);
    CHECK(back[i].success == records[i].success);
    CHECK(back[i].steps_to_sustained == records[i].steps_to_sustained);
    REQUIRE(back[i].emissions.size() == records[i].emissions.size());
    for (std::size_t j = 0; j < back[i].emissions.size(); ++j) {
      const auto& a = back[i].emissions[j];
      const auto& b = records[i].emissions[j];
      CHECK(a.emission_index == b.emission_index);
      CHECK(a.action_steps == b.action_steps);
      CHECK(a.policy_value == b.policy_value);
      CHECK(a.optimal_value == b.optimal_value);
      CHECK(a.gap == b.gap);
      CHECK(a.sustained == b.sustained);
    }
  }
  CHECK(experiment_csv(back) == csv);

  std::istringstream bad("seed,emission_index\n");
  CHECK_THROWS_AS(read_experiment_csv(bad), ParseError);
}

TEST_CASE("worker count does not change results") {
  Rdp rdp = test::grid(2);
  ExperimentConfig cfg = ac5_config();
  cfg.step_cap = 20000;
  const std::vector<std::uint64_t> seeds = {4, 5, 6};
  cfg.workers = 1;
  const std::string one = experiment_csv(run_pac_experiment(rdp, cfg, seeds));
  cfg.workers = 3;
  CHECK(experiment_csv(run_pac_experiment(rdp, cfg, seeds)) == one);
}

TEST_CASE("baseline") {
  SUBCASE("markov bandit") {
    Rdp rdp = make_mab_rdp({0.3, 0.8}, 0.5);
    RdpSimulator env(rdp, Rng(1));
    Rng rng(2);
    BaselineConfig cfg;
    cfg.action_budget = 20000;
    cfg.history_cap = 2;
    BaselineResult r = baseline_history_clustering(env, cfg, rdp.gamma(), 0.1, rng);
    CHECK(r.action_steps <= 20000);
    // Every history length collapses to one cluster.
    CHECK(r.clusters == cfg.history_cap + 1);
    CHECK(optimality_gap(rdp, r.policy, 1e-6).gap <= 1e-5);
  }
  SUBCASE("tolerance 2 merges every history of a length") {
    Rdp rdp = test::grid(2);
    RdpSimulator env(rdp, Rng(1));
    Rng rng(2);
    BaselineConfig cfg;
    cfg.action_budget = 50000;
    cfg.history_cap = 4;
    cfg.merge_tolerance = 2.0;
    BaselineResult r = baseline_history_clustering(env, cfg, rdp.gamma(), 0.1, rng);
    CHECK(r.clusters == cfg.history_cap + 1);
  }
  SUBCASE("tight tolerance keeps the grid states apart") {
    Rdp rdp = test::grid(2);
    RdpSimulator env(rdp, Rng(1));
    Rng rng(2);
    BaselineConfig cfg;
    cfg.action_budget = 200000;
    cfg.history_cap = 4;
    std::vector<Episode> logged;
    BaselineResult r = baseline_history_clustering(env, cfg, rdp.gamma(), 0.1, rng,
                                                   [&](const Episode& e) { logged.push_back(e); });
    CHECK(r.clusters > cfg.history_cap + 1);
    CHECK(logged.size() == r.episodes);
    for (const auto& e : logged) CHECK(e.size() <= cfg.history_cap + 1);
    // The swap bit is hidden beyond the window, but the first move is clear:
    // the enemy sits in row 0 with probability 0.7.
    CHECK(r.policy.action(r.policy.initial()) == rdp.actions().at("a1"));
  }
  SUBCASE("needs a budget") {
    Rdp rdp = test::grid(1);
    RdpSimulator env(rdp, Rng(1));
    Rng rng(2);
    CHECK_THROWS_AS(baseline_history_clustering(env, BaselineConfig{}, 0.9, 0.1, rng), Error);
  }
}

TEST_CASE("duplicate history statistics") {
  const double e2 = std::exp(2.0);
  CHECK(duplicate_history_bound(0.7, 20, 1000) ==
        doctest::Approx(0.25 * e2 * std::pow(0.98, 20) * 1e6).epsilon(1e-12));
  CHECK(duplicate_history_bound(0.7, 20, 1) > 0.0);

  Episode ep;
  for (int i = 0; i < 20; ++i) ep.steps.push_back({"a0", "o", "0"});
  const std::vector<Episode> one = {ep};
  auto single = duplicate_history_rate(one, 20, 0.7);
  CHECK_FALSE(single.observed);
  CHECK(single.bound > 0.0);

  const std::vector<Episode> twice = {ep, ep};
  auto det = duplicate_history_rate(twice, 20, 1.0);
  CHECK(det.observed);
  CHECK(det.vacuous);
  CHECK(det.bound > 1.0);

  Episode other = ep;
  other.steps[19].observation = "p";
  const std::vector<Episode> differ = {ep, other};
  CHECK_FALSE(duplicate_history_rate(differ, 20, 1.0).observed);
  // Only the first m observations count.
  CHECK(duplicate_history_rate(differ, 19, 1.0).observed);
  Episode short_ep;
  short_ep.steps.resize(5, {"a0", "o", "0"});
  const std::vector<Episode> too_short = {short_ep, short_ep};
  CHECK_FALSE(duplicate_history_rate(too_short, 20, 1.0).observed);
}

TEST_CASE("binomial tail and check") {
  CHECK(binomial_upper_tail(10, 0, 0.3) == 1.0);
  CHECK(binomial_upper_tail(1, 1, 0.3) == doctest::Approx(0.3));
  CHECK(binomial_upper_tail(3, 2, 0.5) == doctest::Approx(0.5));
  CHECK(binomial_upper_tail(200, 10, 0.01) == doctest::Approx(4.014180884713425e-05).epsilon(1e-9));
  CHECK(binomial_upper_tail(200, 20, 0.02) == doctest::Approx(5.390686154926275e-09).epsilon(1e-9));

  auto fine = collision_frequency_check(200, 3, 0.02);
  CHECK(fine.pass);
  CHECK_FALSE(fine.vacuous);
  auto bad = collision_frequency_check(200, 20, 0.02);
  CHECK_FALSE(bad.pass);
  CHECK(bad.p_value < 0.01);
  auto vac = collision_frequency_check(200, 200, 5.0);
  CHECK(vac.vacuous);
  CHECK(vac.pass);
}
