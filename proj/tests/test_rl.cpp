#include <doctest.h>

#include <cmath>
#include <sstream>
#include <bit>
#include <thread>

#include "rdpkit/automaton_io.hpp"
#include "rdpkit/environments.hpp"
#include "rdpkit/harness.hpp"
#include "rdpkit/rl.hpp"
#include "support.hpp"

using namespace rdpkit;

namespace {

/// Wraps an environment and records every step it serves.
class RecordingEnv final : public Environment {
 public:
  explicit RecordingEnv(Environment& inner) : inner_(&inner) {}
  const Alphabet& actions() const override { return inner_->actions(); }
  void reset() override {
    if (!current_.empty() || started_) episodes.push_back(current_);
    current_.clear();
    started_ = true;
    inner_->reset();
  }
  StepOutcome step(SymbolId a) override {
    auto o = inner_->step(a);
    current_.push_back(join_triple(inner_->actions().token(a), o.observation, o.reward));
    return o;
  }
  void finish() {
    if (started_) episodes.push_back(current_);
    started_ = false;
  }
  std::vector<std::vector<std::string>> episodes;

 private:
  Environment* inner_;
  std::vector<std::string> current_;
  bool started_ = false;
};

PolicyTransducer stationary_composed(const Rdp& rdp, double p) {
  Pdfa pdfa = rdp_to_pdfa(rdp, p);
  Mdp mdp = induced_mdp(pdfa, rdp.gamma(), p, rdp.actions()).mdp;
  auto policy = greedy_policy(value_iteration(mdp, 400));
  return compose_policy(policy, pdfa, rdp.actions()).policy;
}

}  // namespace

TEST_CASE("schedule") {
  auto s1 = ScheduleState::for_iteration(1);
  CHECK(s1.p == 1.0 / 11.0);
  CHECK(s1.k == 22);
  auto s3 = ScheduleState::for_iteration(3);
  CHECK(s3.p_denominator == 31);
  CHECK(s3.k == static_cast<std::uint64_t>(std::ceil(2.0 * 31 * 9 * (3 + 5 * std::log(3.0)))));
  CHECK_THROWS_AS(ScheduleState::for_iteration(0), Error);
}

TEST_CASE("exploration episodes") {
  Rdp rdp = make_mab_rdp({0.3, 0.8});
  RdpSimulator env(rdp, Rng(1));
  Rng rng(2);

  SUBCASE("zero budget") {
    std::size_t hard = 0, natural = 0;
    for (int i = 0; i < 1000; ++i) {
      auto r = explore_episode(env, 0.5, 0, rng);
      CHECK(r.episode.size() == 0);
      (r.hard_stopped ? hard : natural) += 1;
      CHECK(r.hard_stopped == r.episode.hard_stopped);
    }
    CHECK(hard > 0);
    CHECK(natural > 0);
  }
  SUBCASE("near-certain stop") {
    for (int i = 0; i < 1000; ++i) {
      auto r = explore_episode(env, 1.0 - 1e-12, 5, rng);
      CHECK(r.episode.size() == 0);
      CHECK_FALSE(r.hard_stopped);
    }
  }
  SUBCASE("geometric length") {
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      auto r = explore_episode(env, 0.1, 1'000'000, rng);
      REQUIRE_FALSE(r.hard_stopped);
      const double len = static_cast<double>(r.episode.size());
      sum += len;
      sq += len * len;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - 9.0) < 3.0 * se);
  }
  CHECK_THROWS_AS(explore_episode(env, 0.0, 5, rng), Error);
  CHECK_THROWS_AS(explore_episode(env, 1.0, 5, rng), Error);
}

TEST_CASE("policy composition") {
  SUBCASE("exact grid model gives the optimal value") {
    Rdp rdp = test::grid(2);
    PolicyTransducer policy = stationary_composed(rdp, 1.0 / 41.0);
    const double tol = default_gap_tolerance(rdp);
    auto gap = optimality_gap(rdp, policy, tol);
    CHECK(std::abs(gap.gap) <= 2.0 * tol);
    CHECK(gap.fallback_incidents == 0);
  }
  SUBCASE("one-state pdfa gives a constant action") {
    Pdfa one = test::make_pdfa({"a0:s:1", "a1:s:0"}, {{{{"a0:s:1", 0.45, 0}, {"a1:s:0", 0.45, 0}}, 0.1}});
    ComposedPolicy c = compose_policy(StationaryPolicy{{1}}, one, Alphabet({"a0", "a1"}));
    CHECK(c.policy.num_states() == 1);
    CHECK(c.policy.action(0) == 1);
    CHECK(c.policy.next(0, "s") == 0);
    CHECK(c.unseen.empty());
  }
  SUBCASE("inconsistent projection") {
    Pdfa bad = test::make_pdfa({"a0:s:1", "a1:s:1"},
                               {{{{"a0:s:1", 0.45, 1}, {"a1:s:1", 0.45, 0}}, 0.1}, {{{"a0:s:1", 0.9, 1}}, 0.1}});
    CHECK_THROWS_AS(compose_policy(StationaryPolicy{{0, 0}}, bad, Alphabet({"a0", "a1"})), Error);
  }
  SUBCASE("unseen observations are reported") {
    Pdfa partial = test::make_pdfa({"a0:s:1", "a1:t:0"}, {{{{"a0:s:1", 0.5, 0}, {"a1:t:0", 0.4, 0}}, 0.1}});
    ComposedPolicy c = compose_policy(StationaryPolicy{{0}}, partial, Alphabet({"a0", "a1"}));
    CHECK(c.policy.next(0, "s") == 0);
    CHECK(c.policy.next(0, "t") == 0);
    Pdfa sparse = test::make_pdfa({"a0:s:1", "a1:t:0"}, {{{{"a0:s:1", 0.5, 0}, {"a1:t:0", 0.4, 1}}, 0.1}, {{}, 1.0}});
    ComposedPolicy c2 = compose_policy(StationaryPolicy{{0, 0}}, sparse, Alphabet({"a0", "a1"}));
    CHECK_FALSE(c2.unseen.empty());
  }
}

TEST_CASE("algorithm 1 on a bandit") {
  // From the third iteration on, the emitted policy plays the 0.8 arm.
  Rdp rdp = make_mab_rdp({0.3, 0.8});
  const double tol = 1e-9;
  int good = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RdpSimulator env(rdp, Rng(derive_seed(seed, "env")));
    Rng rng(derive_seed(seed, "agent"));
    Algorithm1Config cfg;
    cfg.gamma = 0.0;
    bool ok = true;
    int late = 0;
    RunLimits limits{5'000'000, 4};
    algorithm1(env, cfg, rng, limits, [&](const PolicyEmission& e) {
      if (e.state_bound < 3) return;
      ++late;
      ok &= optimality_gap(rdp, *e.policy, tol).gap <= 2 * tol;
    });
    good += ok && late > 0;
  }
  CHECK(good >= 18);
}

TEST_CASE("algorithm 1 never learns from hard-stopped episodes") {
  // Each iteration ends with a budget hard stop; only natural episodes of the
  // current iteration may reach the learner.
  Rdp rdp = test::grid(1);
  RdpSimulator sim(rdp, Rng(3));
  Rng rng(4);
  std::vector<Episode> logged;
  std::size_t since = 0, emissions = 0, hard = 0;
  RunSummary s = algorithm1(
      sim, Algorithm1Config{}, rng, RunLimits{200000, 0},
      [&](const PolicyEmission& e) {
        CHECK(e.sample_size == since);
        since = 0;
        ++emissions;
      },
      [&](const Episode& e) {
        logged.push_back(e);
        if (e.hard_stopped) ++hard;
        else ++since;
      });
  CHECK(s.action_steps <= 200000);
  // A tiny early budget can be swallowed by one episode; that iteration is skipped.
  CHECK(s.errors.size() == s.skipped);
  for (const auto& err : s.errors) CHECK(err.find("every episode was hard-stopped") != std::string::npos);
  CHECK(emissions >= 2);
  CHECK(hard >= emissions);
  SampleSet x = sample_from_episodes(logged);
  CHECK(x.size() == logged.size() - hard);
}

TEST_CASE("algorithm 2 schedules") {
  Rdp rdp = test::grid(1);
  Algorithm2Config cfg;
  cfg.n_hat = 2;
  CHECK(ScheduleState::for_iteration(cfg.n_hat).p == 1.0 / 21.0);

  SUBCASE("per-episode relearning") {
    cfg.relearn_every = 1;
    RdpSimulator env(rdp, Rng(9));
    Rng rng(10);
    RunSummary s = algorithm2(env, cfg, rng, RunLimits{2000, 0}, [](const PolicyEmission&) {});
    const std::size_t natural = s.episodes - (s.action_steps >= 2000 ? 1 : 0);
    CHECK(s.emissions + s.skipped == natural);
  }
  SUBCASE("doubling schedule") {
    RdpSimulator env(rdp, Rng(9));
    Rng rng(10);
    std::vector<std::size_t> at;
    RunSummary s = algorithm2(env, cfg, rng, RunLimits{20000, 0},
                              [&](const PolicyEmission& e) { at.push_back(e.episodes); });
    REQUIRE(at.size() >= 3);
    for (std::size_t n : at) CHECK(std::has_single_bit(n));
    CHECK(s.action_steps <= 20000);
  }
  SUBCASE("emission cap") {
    RdpSimulator env(rdp, Rng(9));
    Rng rng(10);
    RunSummary s = algorithm2(env, cfg, rng, RunLimits{1'000'000, 3}, [](const PolicyEmission&) {});
    CHECK(s.emissions == 3);
  }
  SUBCASE("instrumented environment sees the same episodes as the log") {
    RdpSimulator sim(rdp, Rng(9));
    RecordingEnv env(sim);
    Rng rng(10);
    std::vector<Episode> logged;
    algorithm2(env, cfg, rng, RunLimits{500, 0}, [](const PolicyEmission&) {},
               [&](const Episode& e) { logged.push_back(e); });
    env.finish();
    REQUIRE(env.episodes.size() == logged.size());
    for (std::size_t i = 0; i < logged.size(); ++i) CHECK(env.episodes[i] == logged[i].symbols());
  }
}

TEST_CASE("runs are reproducible") {
  Rdp rdp = test::grid(2);
  auto run = [&](std::uint64_t seed) {
    RdpSimulator env(rdp, Rng(derive_seed(seed, "env")));
    Rng rng(derive_seed(seed, "agent"));
    Algorithm2Config cfg;
    cfg.n_hat = 4;
    std::vector<std::string> out;
    algorithm2(env, cfg, rng, RunLimits{20000, 0}, [&](const PolicyEmission& e) {
      out.push_back(std::to_string(e.action_steps) + serialize_automaton(*e.policy));
    });
    return out;
  };
  CHECK(run(7) == run(7));
  CHECK(run(7) != run(8));
}

TEST_CASE("emission queue hands policies across threads") {
  EmissionQueue queue;
  std::vector<std::size_t> seen;
  std::thread consumer([&] {
    while (auto e = queue.pop()) seen.push_back(e->index);
  });
  auto sink = queue.sink();
  for (std::size_t i = 0; i < 100; ++i) {
    PolicyEmission e;
    e.index = i;
    sink(e);
  }
  queue.close();
  consumer.join();
  REQUIRE(seen.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) CHECK(seen[i] == i);
}

TEST_CASE("episode log format") {
  std::vector<Episode> eps(3);
  eps[0].steps = {{"a0", "s+", "1"}, {"a1", "s-", "0"}};
  eps[2].steps = {{"a1", "s+", "1"}};
  eps[2].hard_stopped = true;
  std::stringstream buf;
  write_episodes(buf, eps);
  CHECK(read_episodes(buf) == eps);

  std::istringstream bad_header("nope\n");
  CHECK_THROWS_AS(read_episodes(bad_header), ParseError);
  std::istringstream no_marker("rdpkit-episodes v1\na0:s+:1\n");
  CHECK_THROWS_AS(read_episodes(no_marker), ParseError);
  std::istringstream bad_triple("rdpkit-episodes v1\na0:s+ #\n");
  CHECK_THROWS_AS(read_episodes(bad_triple), ParseError);

  SampleSet x = sample_from_episodes(eps);
  CHECK(x.size() == 2);
  CHECK(x.total_symbols() == 2);
}
