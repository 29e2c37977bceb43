#include "rdpkit/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "rdpkit/environments.hpp"

namespace rdpkit {

double default_gap_tolerance(const Rdp& rdp) {
  return std::max(1e-9, 1e-4 * rdp.max_reward() / (1.0 - rdp.gamma()));
}

GapResult optimality_gap(const Rdp& rdp, const PolicyTransducer& policy, double tolerance,
                         double optimal) {
  if (!(tolerance > 0.0)) throw Error("optimality_gap: tolerance must be positive");
  const PolicyEvaluation eval = evaluate_policy_exact(rdp, policy, tolerance / 2.0, FallbackMode::kFallback);
  return {eval.value, optimal, optimal - eval.value, eval.fallback_incidents};
}

GapResult optimality_gap(const Rdp& rdp, const PolicyTransducer& policy, double tolerance) {
  if (!(tolerance > 0.0)) throw Error("optimality_gap: tolerance must be positive");
  return optimality_gap(rdp, policy, tolerance, optimal_value(rdp, tolerance / 2.0));
}

std::string spec_hash(const Rdp& rdp) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : serialize_rdp(rdp)) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// History-clustering baseline

namespace {

class Interner {
 public:
  SymbolId operator()(std::string_view token) {
    auto [it, inserted] = index_.try_emplace(std::string(token), static_cast<SymbolId>(tokens_.size()));
    if (inserted) tokens_.emplace_back(token);
    return it->second;
  }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, SymbolId> index_;
};

/// Observation-history trie with per-action outcome counts.
struct HistoryTrie {
  struct Node {
    std::size_t depth = 0;
    std::uint64_t visits = 0;
    std::map<SymbolId, std::uint32_t> children;
    // (action, observation, reward) -> count
    std::map<std::tuple<SymbolId, SymbolId, SymbolId>, std::uint64_t> outcomes;
  };
  std::vector<Node> nodes{Node{}};

  std::uint32_t child(std::uint32_t v, SymbolId obs) {
    auto it = nodes[v].children.find(obs);
    if (it != nodes[v].children.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(nodes.size());
    const std::size_t depth = nodes[v].depth + 1;
    nodes[v].children.emplace(obs, id);
    nodes.push_back(Node{});
    nodes.back().depth = depth;
    return id;
  }

  std::optional<std::uint32_t> find(std::span<const SymbolId> history) const {
    std::uint32_t v = 0;
    for (SymbolId s : history) {
      auto it = nodes[v].children.find(s);
      if (it == nodes[v].children.end()) return std::nullopt;
      v = it->second;
    }
    return v;
  }
};

/// Per action, the next-observation distribution of a history (empty if unvisited).
using NextObservation = std::vector<std::map<SymbolId, double>>;

NextObservation next_observation(const HistoryTrie::Node& node, std::size_t num_actions) {
  NextObservation dist(num_actions);
  std::vector<double> totals(num_actions, 0.0);
  for (const auto& [key, count] : node.outcomes) {
    const auto [a, s, r] = key;
    dist[a][s] += static_cast<double>(count);
    totals[a] += static_cast<double>(count);
  }
  for (std::size_t a = 0; a < num_actions; ++a) {
    for (auto& [s, v] : dist[a]) v /= totals[a];
  }
  return dist;
}

/// Largest L1 distance over the actions both histories have data for.
double history_distance(const NextObservation& x, const NextObservation& y) {
  double worst = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    if (x[a].empty() || y[a].empty()) continue;
    double d = 0.0;
    auto i = x[a].begin();
    auto j = y[a].begin();
    while (i != x[a].end() || j != y[a].end()) {
      if (j == y[a].end() || (i != x[a].end() && i->first < j->first)) {
        d += i++->second;
      } else if (i == x[a].end() || j->first < i->first) {
        d += j++->second;
      } else {
        d += std::abs(i++->second - j++->second);
      }
    }
    worst = std::max(worst, d);
  }
  return worst;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

}  // namespace

BaselineResult baseline_history_clustering(Environment& env, const BaselineConfig& cfg, double gamma,
                                           double epsilon, Rng& rng, const EpisodeSink& episode_sink) {
  if (!(cfg.merge_tolerance >= 0.0)) throw Error("baseline: merge tolerance must be nonnegative");
  if (cfg.min_visits == 0) throw Error("baseline: min_visits must be positive");
  if (cfg.episode_budget == 0 && cfg.action_budget == 0) throw Error("baseline: needs an episode or action budget");
  const Alphabet& actions = env.actions();
  const std::size_t num_actions = actions.size();
  const std::size_t cap = cfg.history_cap;
  const std::size_t length = cap + 1;

  Interner observations, rewards;
  HistoryTrie trie;
  std::size_t episodes = 0;
  std::uint64_t steps = 0;
  while ((cfg.episode_budget == 0 || episodes < cfg.episode_budget) &&
         (cfg.action_budget == 0 || steps < cfg.action_budget)) {
    env.reset();
    ++episodes;
    Episode logged;
    logged.hard_stopped = true;
    std::uint32_t v = 0;
    for (std::size_t t = 0; t < length && (cfg.action_budget == 0 || steps < cfg.action_budget); ++t) {
      const auto a = static_cast<SymbolId>(rng.index(num_actions));
      const StepOutcome out = env.step(a);
      ++steps;
      if (episode_sink) {
        logged.steps.push_back({actions.token(a), std::string(out.observation), std::string(out.reward)});
      }
      const SymbolId s = observations(out.observation);
      const SymbolId r = rewards(out.reward);
      ++trie.nodes[v].visits;
      ++trie.nodes[v].outcomes[{a, s, r}];
      v = trie.child(v, s);
    }
    if (episode_sink) episode_sink(logged);
  }
  if (episodes == 0 || trie.nodes[0].visits == 0) throw Error("baseline: no episodes collected");
  if (trie.nodes[0].visits < cfg.min_visits) throw Error("baseline: fewer episodes than min_visits");

  // Single-linkage clustering of qualifying histories, one length at a time.
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> cluster_of(trie.nodes.size(), kNone);
  std::vector<std::vector<std::uint32_t>> members;
  std::vector<std::size_t> cluster_depth;
  std::vector<std::uint32_t> layer{0};
  for (std::size_t depth = 0; depth <= cap && !layer.empty(); ++depth) {
    std::vector<std::uint32_t> qualifying;
    for (auto v : layer) {
      if (trie.nodes[v].visits >= cfg.min_visits) qualifying.push_back(v);
    }
    std::vector<NextObservation> dists;
    for (auto v : qualifying) dists.push_back(next_observation(trie.nodes[v], num_actions));
    std::vector<std::size_t> parent(qualifying.size());
    std::iota(parent.begin(), parent.end(), 0);
    for (std::size_t i = 0; i < qualifying.size(); ++i) {
      for (std::size_t j = i + 1; j < qualifying.size(); ++j) {
        if (find_root(parent, i) == find_root(parent, j)) continue;
        if (history_distance(dists[i], dists[j]) <= cfg.merge_tolerance) {
          parent[find_root(parent, j)] = find_root(parent, i);
        }
      }
    }
    std::map<std::size_t, std::size_t> root_cluster;
    for (std::size_t i = 0; i < qualifying.size(); ++i) {
      auto [it, inserted] = root_cluster.try_emplace(find_root(parent, i), members.size());
      if (inserted) {
        members.emplace_back();
        cluster_depth.push_back(depth);
      }
      members[it->second].push_back(qualifying[i]);
      cluster_of[qualifying[i]] = it->second;
    }
    std::vector<std::uint32_t> next_layer;
    for (auto v : qualifying) {
      for (const auto& [s, c] : trie.nodes[v].children) next_layer.push_back(c);
    }
    layer = std::move(next_layer);
  }

  // Deterministic cluster transitions by weighted vote of the members.
  const std::size_t num_clusters = members.size();
  const std::size_t num_obs = observations.tokens().size();
  std::vector<StateId> trans(num_clusters * num_obs, kNoState);
  std::vector<std::vector<SymbolId>> path(trie.nodes.size());
  for (std::uint32_t v = 0; v < trie.nodes.size(); ++v) {
    for (const auto& [s, c] : trie.nodes[v].children) {
      path[c] = path[v];
      path[c].push_back(s);
    }
  }
  for (std::size_t c = 0; c < num_clusters; ++c) {
    std::vector<std::map<std::size_t, std::uint64_t>> votes(num_obs);
    for (auto v : members[c]) {
      for (const auto& [s, child] : trie.nodes[v].children) {
        std::optional<std::uint32_t> target = child;
        if (cluster_depth[c] == cap) {
          // Slide the window: drop the oldest observation.
          std::vector<SymbolId> window(path[v].begin() + (cap > 0 ? 1 : 0), path[v].end());
          if (cap > 0) window.push_back(s);
          target = trie.find(window);
        }
        if (!target || cluster_of[*target] == kNone) continue;
        std::uint64_t weight = 0;
        for (const auto& [key, count] : trie.nodes[v].outcomes) {
          if (std::get<1>(key) == s) weight += count;
        }
        votes[s][cluster_of[*target]] += weight;
      }
    }
    for (std::size_t s = 0; s < num_obs; ++s) {
      std::size_t best = kNone;
      std::uint64_t best_weight = 0;
      for (const auto& [target, w] : votes[s]) {
        if (w > best_weight) {
          best = target;
          best_weight = w;
        }
      }
      if (best != kNone) trans[c * num_obs + s] = static_cast<StateId>(best);
    }
  }

  // Cluster MDP with an absorbing sink for unmodelled continuations.
  Alphabet reward_alphabet(rewards.tokens());
  SymbolId low_reward = 0;
  for (SymbolId r = 1; r < reward_alphabet.size(); ++r) {
    if (parse_reward(reward_alphabet.token(r)) < parse_reward(reward_alphabet.token(low_reward))) low_reward = r;
  }
  const auto sink = static_cast<StateId>(num_clusters);
  std::vector<std::vector<MdpTransition>> rows((num_clusters + 1) * num_actions);
  for (std::size_t c = 0; c < num_clusters; ++c) {
    std::vector<std::map<std::pair<StateId, SymbolId>, double>> pooled(num_actions);
    std::vector<double> totals(num_actions, 0.0);
    for (auto v : members[c]) {
      for (const auto& [key, count] : trie.nodes[v].outcomes) {
        const auto [a, s, r] = key;
        StateId next = trans[c * num_obs + s];
        if (next == kNoState) next = sink;
        pooled[a][{next, r}] += static_cast<double>(count);
        totals[a] += static_cast<double>(count);
      }
    }
    for (std::size_t a = 0; a < num_actions; ++a) {
      auto& row = rows[c * num_actions + a];
      if (totals[a] == 0.0) {
        row.push_back({sink, low_reward, 1.0});
        continue;
      }
      for (const auto& [key, count] : pooled[a]) row.push_back({key.first, key.second, count / totals[a]});
    }
  }
  for (std::size_t a = 0; a < num_actions; ++a) rows[sink * num_actions + a].push_back({sink, low_reward, 1.0});
  Mdp mdp(actions, reward_alphabet, gamma, 0, num_clusters + 1, std::move(rows));
  const IterationCount iterations = iteration_count(gamma, epsilon, mdp.max_reward());
  const StationaryPolicy greedy = greedy_policy(value_iteration(mdp, iterations.count));

  std::vector<SymbolId> outputs(greedy.actions.begin(), greedy.actions.begin() + num_clusters);
  PolicyTransducer policy(Transducer<SymbolId>(Alphabet(observations.tokens()), 0, std::move(trans), outputs),
                          actions);
  return {std::move(policy), num_clusters, episodes, steps};
}

// ---------------------------------------------------------------------------
// Experiments

const char* algorithm_name(AlgorithmKind kind) {
  switch (kind) {
    case AlgorithmKind::kAlgorithm1: return "alg1";
    case AlgorithmKind::kAlgorithm2: return "alg2";
    case AlgorithmKind::kBaseline: return "baseline";
  }
  return "?";
}

std::optional<AlgorithmKind> parse_algorithm(std::string_view name) {
  if (name == "alg1") return AlgorithmKind::kAlgorithm1;
  if (name == "alg2") return AlgorithmKind::kAlgorithm2;
  if (name == "baseline") return AlgorithmKind::kBaseline;
  return std::nullopt;
}

void finalize_record(ExperimentRecord& record, double epsilon) {
  bool streak = true;
  record.steps_to_sustained.reset();
  for (auto it = record.emissions.rbegin(); it != record.emissions.rend(); ++it) {
    streak = streak && it->gap <= epsilon;
    it->sustained = streak;
    if (streak) record.steps_to_sustained = it->action_steps;
  }
  record.success = record.steps_to_sustained.has_value();
}

ExperimentRecord run_experiment(const Rdp& rdp, const ExperimentConfig& cfg, std::uint64_t seed,
                                RunArtifacts* artifacts) {
  const double tol = cfg.gap_tolerance > 0.0 ? cfg.gap_tolerance : default_gap_tolerance(rdp);
  const double optimal = optimal_value(rdp, tol / 2.0);
  ExperimentRecord record;
  record.seed = seed;
  record.spec_hash = spec_hash(rdp);

  RdpSimulator env(rdp, Rng(derive_seed(seed, "env")));
  Rng agent(derive_seed(seed, "agent"));
  const auto start = std::chrono::steady_clock::now();
  auto add = [&](std::uint64_t steps, const PolicyTransducer& policy) {
    const GapResult g = optimality_gap(rdp, policy, tol, optimal);
    EmissionRecord e;
    e.emission_index = record.emissions.size();
    e.action_steps = steps;
    e.policy_value = g.policy_value;
    e.optimal_value = g.optimal_value;
    e.gap = g.gap;
    e.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    record.emissions.push_back(e);
  };
  const PolicySink sink = [&](const PolicyEmission& e) {
    add(e.action_steps, *e.policy);
    if (artifacts) artifacts->final_policy = e.policy;
  };
  EpisodeSink episodes;
  if (artifacts) episodes = [&](const Episode& e) { artifacts->episodes.push_back(e); };
  const RunLimits limits{cfg.step_cap, 0};
  RunSummary summary;
  switch (cfg.algorithm) {
    case AlgorithmKind::kAlgorithm1:
      summary = algorithm1(env, cfg.alg1, agent, limits, sink, episodes);
      break;
    case AlgorithmKind::kAlgorithm2:
      summary = algorithm2(env, cfg.alg2, agent, limits, sink, episodes);
      break;
    case AlgorithmKind::kBaseline: {
      BaselineConfig b = cfg.baseline;
      if (b.action_budget == 0 || b.action_budget > cfg.step_cap) b.action_budget = cfg.step_cap;
      BaselineResult result = baseline_history_clustering(env, b, rdp.gamma(), cfg.epsilon, agent, episodes);
      add(result.action_steps, result.policy);
      if (artifacts) artifacts->final_policy = std::make_shared<const PolicyTransducer>(std::move(result.policy));
      break;
    }
  }
  if (artifacts) artifacts->errors = std::move(summary.errors);
  finalize_record(record, cfg.epsilon);
  return record;
}

std::vector<ExperimentRecord> run_pac_experiment(const Rdp& rdp, const ExperimentConfig& cfg,
                                                 std::span<const std::uint64_t> seeds,
                                                 std::vector<RunArtifacts>* artifacts) {
  if (seeds.empty()) throw Error("run_pac_experiment: no seeds");
  std::vector<ExperimentRecord> records(seeds.size());
  if (artifacts) artifacts->assign(seeds.size(), RunArtifacts{});
  std::vector<std::exception_ptr> errors(seeds.size());
  std::size_t workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, seeds.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
      try {
        records[i] = run_experiment(rdp, cfg, seeds[i], artifacts ? &(*artifacts)[i] : nullptr);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const ExperimentRecord& a, const ExperimentRecord& b) { return a.seed < b.seed; });
  return records;
}

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr const char* kCsvHeader = "seed,emission_index,action_steps,policy_value,optimal_value,gap,sustained";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

template <class T>
T csv_number(const std::string& text, std::size_t line) {
  std::istringstream in(text);
  T v{};
  if (!(in >> v) || !in.eof()) throw ParseError(line, "invalid number '" + text + "'");
  return v;
}

double csv_double(const std::string& text, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || *end != '\0') throw ParseError(line, "invalid number '" + text + "'");
  return v;
}

bool csv_flag(const std::string& text, std::size_t line) {
  if (text == "0") return false;
  if (text == "1") return true;
  throw ParseError(line, "expected 0 or 1, found '" + text + "'");
}

}  // namespace

void write_experiment_csv(std::ostream& out, const std::vector<ExperimentRecord>& records) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    for (const auto& e : r.emissions) {
      out << r.seed << ',' << e.emission_index << ',' << e.action_steps << ',' << g17(e.policy_value) << ','
          << g17(e.optimal_value) << ',' << g17(e.gap) << ',' << (e.sustained ? 1 : 0) << '\n';
    }
    out << r.seed << ",summary,";
    if (r.steps_to_sustained) out << *r.steps_to_sustained;
    out << ",,,," << (r.success ? 1 : 0) << '\n';
  }
  for (const auto& r : records) out << "# spec," << r.seed << ',' << r.spec_hash << '\n';
}

std::string experiment_csv(const std::vector<ExperimentRecord>& records) {
  std::ostringstream out;
  write_experiment_csv(out, records);
  return out.str();
}

std::vector<ExperimentRecord> read_experiment_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kCsvHeader) throw ParseError(line_no, "missing experiment CSV header");
  std::vector<ExperimentRecord> records;
  std::map<std::uint64_t, std::size_t> by_seed;
  auto record_for = [&](std::uint64_t seed) -> ExperimentRecord& {
    auto [it, inserted] = by_seed.try_emplace(seed, records.size());
    if (inserted) {
      records.emplace_back();
      records.back().seed = seed;
    }
    return records[it->second];
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() == 3 && f[0] == "# spec") {
      record_for(csv_number<std::uint64_t>(f[1], line_no)).spec_hash = f[2];
      continue;
    }
    if (f.size() != 7) throw ParseError(line_no, "expected 7 fields");
    ExperimentRecord& r = record_for(csv_number<std::uint64_t>(f[0], line_no));
    if (f[1] == "summary") {
      if (!f[2].empty()) r.steps_to_sustained = csv_number<std::uint64_t>(f[2], line_no);
      r.success = csv_flag(f[6], line_no);
      continue;
    }
    EmissionRecord e;
    e.emission_index = csv_number<std::size_t>(f[1], line_no);
    e.action_steps = csv_number<std::uint64_t>(f[2], line_no);
    e.policy_value = csv_double(f[3], line_no);
    e.optimal_value = csv_double(f[4], line_no);
    e.gap = csv_double(f[5], line_no);
    e.sustained = csv_flag(f[6], line_no);
    r.emissions.push_back(e);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Duplicate histories

double duplicate_history_bound(double g, std::size_t m, std::size_t n) {
  const double nn = static_cast<double>(n);
  return 0.25 * std::exp(2.0) * std::pow(std::sqrt(2.0) * g, 2.0 * static_cast<double>(m)) * nn * nn;
}

CollisionResult duplicate_history_rate(std::span<const Episode> episodes, std::size_t m, double g) {
  if (!(g > 0.0 && g <= 1.0)) throw Error("duplicate_history_rate: g must lie in (0, 1]");
  CollisionResult result;
  std::set<std::vector<std::string>> seen;
  for (const auto& e : episodes) {
    if (e.size() < m) continue;
    std::vector<std::string> history;
    history.reserve(m);
    for (std::size_t i = 0; i < m; ++i) history.push_back(e.steps[i].observation);
    if (!seen.insert(std::move(history)).second) result.observed = true;
  }
  result.bound = duplicate_history_bound(g, m, episodes.size());
  result.vacuous = result.bound >= 1.0;
  return result;
}

double binomial_upper_tail(std::size_t n, std::size_t k, double p) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double lp = std::log(p), lq = std::log1p(-p);
  const double ln_n = std::lgamma(static_cast<double>(n) + 1.0);
  double tail = 0.0;
  for (std::size_t i = k; i <= n; ++i) {
    const double di = static_cast<double>(i);
    tail += std::exp(ln_n - std::lgamma(di + 1.0) - std::lgamma(static_cast<double>(n - i) + 1.0) + di * lp +
                     static_cast<double>(n - i) * lq);
  }
  return std::min(1.0, tail);
}

BinomialCheck collision_frequency_check(std::size_t trials, std::size_t hits, double bound, double level) {
  if (hits > trials) throw Error("collision_frequency_check: more hits than trials");
  BinomialCheck check;
  check.trials = trials;
  check.hits = hits;
  check.bound = bound;
  check.vacuous = bound >= 1.0;
  check.p_value = binomial_upper_tail(trials, hits, std::min(bound, 1.0));
  check.pass = check.vacuous || check.p_value >= 1.0 - level;
  return check;
}

}  // namespace rdpkit
