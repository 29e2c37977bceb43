#include "rdpkit/rl.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace rdpkit {

std::vector<std::string> Episode::symbols() const {
  std::vector<std::string> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(join_triple(s.action, s.observation, s.reward));
  return out;
}

RdpSimulator::RdpSimulator(const Rdp& rdp, Rng rng)
    : rdp_(&rdp), rng_(std::move(rng)), state_(rdp.dynamics().initial()) {}

StepOutcome RdpSimulator::step(SymbolId action) {
  if (action >= rdp_->actions().size()) throw Error("simulator: action id out of range");
  if (state_ == kNoState) throw Error("simulator: episode left the dynamics support");
  const auto& outcomes = rdp_->outcomes(state_, action);
  weights_.clear();
  double total = 0.0;
  for (const auto& o : outcomes) {
    weights_.push_back(o.probability);
    total += o.probability;
  }
  const Outcome& o = outcomes[rng_.categorical(weights_, total)];
  state_ = rdp_->dynamics().next(state_, o.observation);
  return {rdp_->observations().token(o.observation), rdp_->rewards().token(o.reward)};
}

ScheduleState ScheduleState::for_iteration(std::size_t ell) {
  if (ell == 0) throw Error("schedule: iteration index starts at 1");
  ScheduleState s;
  s.ell = ell;
  s.p_denominator = 10 * static_cast<std::uint64_t>(ell) + 1;
  s.p = 1.0 / static_cast<double>(s.p_denominator);
  const double l = static_cast<double>(ell);
  // 2/p is the integer 2(10ℓ+1), so only the logarithm term is inexact.
  s.k = static_cast<std::uint64_t>(
      std::ceil(2.0 * static_cast<double>(s.p_denominator) * l * l * (l + 5.0 * std::log(l))));
  return s;
}

ExploreResult explore_episode(Environment& env, double stop_p, std::uint64_t budget, Rng& rng) {
  if (!(stop_p > 0.0 && stop_p < 1.0)) throw Error("explore_episode: stop probability must lie in (0, 1)");
  const Alphabet& actions = env.actions();
  if (actions.empty()) throw Error("explore_episode: environment has no actions");
  ExploreResult result;
  env.reset();
  while (true) {
    if (rng.uniform() < stop_p) return result;
    if (result.episode.size() >= budget) {
      result.hard_stopped = true;
      result.episode.hard_stopped = true;
      return result;
    }
    const auto a = static_cast<SymbolId>(rng.index(actions.size()));
    const StepOutcome out = env.step(a);
    result.episode.steps.push_back(
        {actions.token(a), std::string(out.observation), std::string(out.reward)});
  }
}

ComposedPolicy compose_policy(const StationaryPolicy& stationary, const Pdfa& pdfa,
                              const Alphabet& actions) {
  const std::size_t n = pdfa.num_states();
  if (stationary.actions.size() != n) {
    throw Error("compose_policy: stationary policy covers " + std::to_string(stationary.actions.size()) +
                " states, PDFA has " + std::to_string(n));
  }
  for (SymbolId a : stationary.actions) {
    if (a >= actions.size()) throw Error("compose_policy: action id out of range");
  }

  const Alphabet& sigma = pdfa.alphabet();
  struct Parsed {
    std::string action, observation, reward;
  };
  std::vector<Parsed> parsed;
  std::set<std::string> observation_set;
  for (const auto& token : sigma.tokens()) {
    auto t = split_triple(token);
    if (!t) throw Error("compose_policy: symbol '" + token + "' is not an a:s:r triple");
    parsed.push_back({std::string(t->action), std::string(t->observation), std::string(t->reward)});
    observation_set.insert(parsed.back().observation);
  }
  Alphabet observations(std::vector<std::string>(observation_set.begin(), observation_set.end()));

  // Symbols grouped by observation, each group ordered by (action, reward).
  std::vector<std::vector<SymbolId>> by_observation(observations.size());
  for (SymbolId s = 0; s < sigma.size(); ++s) by_observation[observations.at(parsed[s].observation)].push_back(s);
  for (auto& group : by_observation) {
    std::sort(group.begin(), group.end(), [&](SymbolId x, SymbolId y) {
      return std::tie(parsed[x].action, parsed[x].reward) < std::tie(parsed[y].action, parsed[y].reward);
    });
  }

  const std::vector<bool> reachable = reachable_states(pdfa);
  ComposedPolicy result{
      PolicyTransducer(Transducer<SymbolId>(Alphabet{}, pdfa.initial(), {}, stationary.actions), actions),
      {}};
  std::vector<StateId> transitions(n * observations.size(), kNoState);
  for (StateId q = 0; q < n; ++q) {
    for (SymbolId o = 0; o < observations.size(); ++o) {
      SymbolId chosen = kNoSymbol;
      for (SymbolId s : by_observation[o]) {
        if (pdfa.emission(q, s) <= 0.0 || pdfa.next(q, s) == kNoState) continue;
        if (chosen == kNoSymbol) {
          chosen = s;
          transitions[q * observations.size() + o] = pdfa.next(q, s);
        } else if (pdfa.next(q, s) != pdfa.next(q, chosen)) {
          throw Error("compose_policy: projection inconsistency at state " + std::to_string(q) + ": '" +
                      sigma.token(chosen) + "' and '" + sigma.token(s) + "' lead to different states");
        }
      }
      if (chosen == kNoSymbol && reachable[q]) result.unseen.emplace_back(q, observations.token(o));
    }
  }
  result.policy = PolicyTransducer(
      Transducer<SymbolId>(std::move(observations), pdfa.initial(), std::move(transitions), stationary.actions),
      actions);
  return result;
}

PolicyFromSample policy_from_sample(const PrefixTree& tree, const Alphabet& symbols,
                                    const LearnerConfig& learner, const Alphabet& actions, double gamma,
                                    double epsilon, double stop_p) {
  LearnResult learned = learn_pdfa(tree, symbols, learner);
  InducedMdp induced = induced_mdp(learned.pdfa, gamma, stop_p, actions);
  const IterationCount iterations = iteration_count(gamma, epsilon, induced.mdp.max_reward());
  const ActionValueTable q = value_iteration(induced.mdp, iterations.count);
  ComposedPolicy composed = compose_policy(greedy_policy(q), learned.pdfa, actions);
  return {std::move(learned), std::move(composed)};
}

namespace {

LearnerConfig learner_config(const LearnerTuning& tuning, std::size_t n_hat, double delta) {
  LearnerConfig cfg;
  cfg.n_hat = n_hat;
  cfg.delta = delta;
  cfg.min_visits = tuning.min_visits;
  cfg.depth_cap = tuning.depth_cap;
  cfg.distinguishability_floor = tuning.distinguishability_floor;
  cfg.forced_split_score = tuning.forced_split_score;
  return cfg;
}

void check_run_config(double gamma, double epsilon, double delta) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error("discount must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw Error("epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0, 1)");
}

/// Accumulates episodes as interned symbol strings for the learner.
class Sample {
 public:
  void add(const Episode& episode) {
    word_.clear();
    for (const auto& s : episode.steps) word_.push_back(set_.intern(join_triple(s.action, s.observation, s.reward)));
    tree_.add(word_);
    ++episodes_;
  }
  const PrefixTree& tree() const noexcept { return tree_; }
  Alphabet alphabet() const { return set_.alphabet(); }
  std::size_t episodes() const noexcept { return episodes_; }

 private:
  SampleSet set_;
  PrefixTree tree_;
  std::vector<SymbolId> word_;
  std::size_t episodes_ = 0;
};

/// Runs one learning pass and forwards the policy; failures are recorded.
bool emit_policy(const Sample& sample, const LearnerConfig& learner, const Alphabet& actions, double gamma,
                 double epsilon, double stop_p, std::size_t state_bound, RunSummary& summary,
                 const PolicySink& sink) {
  try {
    PolicyFromSample out =
        policy_from_sample(sample.tree(), sample.alphabet(), learner, actions, gamma, epsilon, stop_p);
    PolicyEmission emission;
    emission.index = summary.emissions;
    emission.action_steps = summary.action_steps;
    emission.episodes = summary.episodes;
    emission.sample_size = sample.episodes();
    emission.state_bound = state_bound;
    emission.learned_states = out.learned.pdfa.num_states();
    emission.capacity_saturated = out.learned.capacity_saturated;
    emission.unseen_observations = out.composed.unseen.size();
    emission.policy = std::make_shared<const PolicyTransducer>(std::move(out.composed.policy));
    ++summary.emissions;
    if (sink) sink(emission);
    return true;
  } catch (const Error& e) {
    ++summary.skipped;
    summary.errors.push_back("after " + std::to_string(summary.action_steps) + " actions: " + e.what());
    return false;
  }
}

bool done(const RunSummary& summary, const RunLimits& limits) {
  return summary.action_steps >= limits.max_action_steps ||
         (limits.max_emissions != 0 && summary.emissions >= limits.max_emissions);
}

}  // namespace

RunSummary algorithm1(Environment& env, const Algorithm1Config& cfg, Rng& rng, const RunLimits& limits,
                      const PolicySink& sink, const EpisodeSink& episodes) {
  check_run_config(cfg.gamma, cfg.epsilon, cfg.delta);
  RunSummary summary;
  for (std::size_t ell = 1; !done(summary, limits); ++ell) {
    ScheduleState schedule = ScheduleState::for_iteration(ell);
    Sample x;
    while (schedule.actions_used < schedule.k) {
      const std::uint64_t remaining_run = limits.max_action_steps - summary.action_steps;
      const std::uint64_t budget = schedule.k - schedule.actions_used;
      ExploreResult r = explore_episode(env, schedule.p, std::min(budget, remaining_run), rng);
      schedule.actions_used += r.episode.size();
      summary.action_steps += r.episode.size();
      ++summary.episodes;
      if (episodes) episodes(r.episode);
      // The run cap cut the iteration short: no policy for a partial sample.
      if (r.hard_stopped && remaining_run < budget) return summary;
      if (!r.hard_stopped) {
        x.add(r.episode);
        ++schedule.episodes_collected;
      }
    }
    if (x.episodes() == 0) {
      ++summary.skipped;
      summary.errors.push_back("iteration " + std::to_string(ell) + ": every episode was hard-stopped");
      continue;
    }
    emit_policy(x, learner_config(cfg.learner, ell, cfg.delta / 2.0), env.actions(), cfg.gamma, cfg.epsilon,
                schedule.p, ell, summary, sink);
  }
  return summary;
}

RunSummary algorithm2(Environment& env, const Algorithm2Config& cfg, Rng& rng, const RunLimits& limits,
                      const PolicySink& sink, const EpisodeSink& episodes) {
  check_run_config(cfg.gamma, cfg.epsilon, cfg.delta);
  if (cfg.n_hat == 0) throw Error("algorithm2: n_hat must be at least 1");
  const double p = 1.0 / static_cast<double>(10 * cfg.n_hat + 1);
  const LearnerConfig learner = learner_config(cfg.learner, cfg.n_hat, cfg.delta);
  RunSummary summary;
  Sample x;
  while (!done(summary, limits)) {
    ExploreResult r = explore_episode(env, p, limits.max_action_steps - summary.action_steps, rng);
    summary.action_steps += r.episode.size();
    ++summary.episodes;
    if (episodes) episodes(r.episode);
    if (r.hard_stopped) break;
    x.add(r.episode);
    const std::size_t count = x.episodes();
    const bool relearn = cfg.relearn_every == 0 ? std::has_single_bit(count) : count % cfg.relearn_every == 0;
    if (relearn) emit_policy(x, learner, env.actions(), cfg.gamma, cfg.epsilon, p, cfg.n_hat, summary, sink);
  }
  return summary;
}

void EmissionQueue::push(PolicyEmission emission) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw Error("emission queue is closed");
    items_.push_back(std::move(emission));
  }
  ready_.notify_one();
}

std::optional<PolicyEmission> EmissionQueue::pop() {
  std::unique_lock lock(mutex_);
  ready_.wait(lock, [&] { return closed_ || !items_.empty(); });
  if (items_.empty()) return std::nullopt;
  PolicyEmission e = std::move(items_.front());
  items_.pop_front();
  return e;
}

void EmissionQueue::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  ready_.notify_all();
}

PolicySink EmissionQueue::sink() {
  return [this](const PolicyEmission& e) { push(e); };
}

void write_episode(std::ostream& out, const Episode& episode) {
  for (const auto& s : episode.steps) out << s.action << ':' << s.observation << ':' << s.reward << ' ';
  out << (episode.hard_stopped ? '!' : '#') << '\n';
}

void write_episodes(std::ostream& out, const std::vector<Episode>& episodes) {
  out << "rdpkit-episodes v1\n";
  for (const auto& e : episodes) write_episode(out, e);
}

std::vector<Episode> read_episodes(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&] {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError(line_no + 1, "empty episode log");
  {
    std::istringstream header(line);
    std::string magic, version, extra;
    if (!(header >> magic >> version) || magic != "rdpkit-episodes" || version != "v1" || (header >> extra)) {
      throw ParseError(line_no, "expected header 'rdpkit-episodes v1'");
    }
  }
  std::vector<Episode> episodes;
  while (next_line()) {
    std::istringstream words(line);
    std::vector<std::string> tokens;
    for (std::string w; words >> w;) tokens.push_back(std::move(w));
    const std::string last = tokens.back();
    if (last != "#" && last != "!") throw ParseError(line_no, "episode must end with '#' or '!'");
    tokens.pop_back();
    Episode e;
    e.hard_stopped = last == "!";
    for (const auto& t : tokens) {
      auto triple = split_triple(t);
      if (!triple) throw ParseError(line_no, "'" + t + "' is not an a:s:r triple");
      e.steps.push_back({std::string(triple->action), std::string(triple->observation), std::string(triple->reward)});
    }
    episodes.push_back(std::move(e));
  }
  return episodes;
}

SampleSet sample_from_episodes(const std::vector<Episode>& episodes) {
  SampleSet x;
  for (const auto& e : episodes) {
    if (!e.hard_stopped) x.add(e.symbols());
  }
  return x;
}

}  // namespace rdpkit
