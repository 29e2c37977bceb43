#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "rdpkit/automaton_io.hpp"
#include "rdpkit/environments.hpp"

namespace rdpkit::cli {

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  for (char c : text + ",") {
    if (c == ',' || c == ' ') {
      if (!item.empty()) items.push_back(std::move(item));
      item.clear();
    } else {
      item += c;
    }
  }
  return items;
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  if (!(in >> v) || !in.eof()) throw UsageError("invalid value '" + text + "' for " + key);
  return v;
}

bool parse_flag(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw UsageError("invalid boolean '" + text + "' for " + key);
}

/// Typed access to a parameter map that remembers which keys were read.
class ParamReader {
 public:
  ParamReader(const Params& params, std::string scope) : params_(params), scope_(std::move(scope)) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return params_.count(key) != 0;
  }
  const std::string& raw(const std::string& key) {
    if (!has(key)) throw UsageError(scope_ + ": missing required parameter '" + key + "'");
    return params_.at(key);
  }
  template <class T>
  T get(const std::string& key, T fallback) {
    return has(key) ? parse_value<T>(name(key), params_.at(key)) : fallback;
  }
  template <class T>
  T require(const std::string& key) {
    return parse_value<T>(name(key), raw(key));
  }
  bool flag(const std::string& key, bool fallback) {
    return has(key) ? parse_flag(name(key), params_.at(key)) : fallback;
  }
  std::vector<double> doubles(const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split_list(raw(key))) out.push_back(parse_value<double>(name(key), item));
    return out;
  }
  /// Rejects keys nobody asked for.
  void finish() const {
    for (const auto& [key, value] : params_) {
      if (!used_.count(key)) throw UsageError(scope_ + ": unknown parameter '" + key + "'");
    }
  }

 private:
  std::string name(const std::string& key) const { return scope_ + "." + key; }

  const Params& params_;
  std::string scope_;
  std::set<std::string> used_;
};

}  // namespace

Rdp build_environment(const std::string& kind, const Params& params) {
  ParamReader p(params, "env");
  auto checked = [&](auto make) {
    try {
      return make();
    } catch (const UsageError&) {
      throw;
    } catch (const Error& e) {
      throw UsageError(std::string("invalid ") + kind + " environment: " + e.what());
    }
  };
  Rdp rdp = checked([&]() -> Rdp {
    if (kind == "grid") {
      GridSpec spec;
      spec.m = p.require<std::size_t>("m");
      spec.p0 = p.doubles("p0");
      spec.p1 = p.doubles("p1");
      spec.gamma = p.get<double>("gamma", 0.9);
      return make_grid_rdp(spec);
    }
    if (kind == "chain") {
      return make_chain_rdp(p.require<std::size_t>("n"), p.get<std::size_t>("good_action", 0),
                            p.get<double>("gamma", 0.9), p.flag("with_ended", false),
                            p.get<std::size_t>("num_actions", 2));
    }
    if (kind == "parity") {
      return make_parity_rdp(p.require<std::size_t>("m"), p.require<std::uint64_t>("subset"),
                             p.get<double>("noise", 0.0), p.get<double>("gamma", 0.9));
    }
    if (kind == "mab") return make_mab_rdp(p.doubles("arms"), p.get<double>("gamma", 0.0));
    if (kind == "file") return load_rdp(p.raw("path"));
    throw UsageError("unknown environment kind '" + kind + "' (grid, chain, parity, mab, file)");
  });
  p.finish();
  return rdp;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("config file " + path.string() + " not found");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path.string());
  } catch (const CLI::Error& e) {
    throw UsageError("cannot read config " + path.string() + ": " + e.what());
  }
  std::map<std::string, Params> sections;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (item.parents.size() != 1) throw UsageError("config key '" + item.fullname() + "' must sit in a section");
    std::string joined;
    for (const auto& v : item.inputs) joined += (joined.empty() ? "" : ",") + v;
    sections[item.parents[0]][item.name] = joined;
  }
  for (const auto& [name, _] : sections) {
    if (name != "env" && name != "algorithm" && name != "run") {
      throw UsageError("unknown config section [" + name + "]");
    }
  }

  RunConfig cfg;
  Params env = sections["env"];
  auto kind = env.find("kind");
  if (kind == env.end()) throw UsageError("[env] needs 'kind'");
  cfg.env_kind = kind->second;
  env.erase(kind);
  if (auto it = env.find("path"); it != env.end() && std::filesystem::path(it->second).is_relative()) {
    it->second = (path.parent_path() / it->second).string();
  }
  cfg.env_params = env;

  ParamReader a(sections["algorithm"], "algorithm");
  ExperimentConfig& x = cfg.experiment;
  const std::string name = a.has("name") ? a.raw("name") : "alg2";
  auto algorithm = parse_algorithm(name);
  if (!algorithm) throw UsageError("unknown algorithm '" + name + "' (alg1, alg2, baseline)");
  x.algorithm = *algorithm;
  x.epsilon = a.get<double>("epsilon", 0.1);
  const double delta = a.get<double>("delta", 0.1);
  if (!(x.epsilon > 0.0)) throw UsageError("algorithm.epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw UsageError("algorithm.delta must lie in (0, 1)");
  x.step_cap = a.get<std::uint64_t>("step_cap", 200'000);
  x.gap_tolerance = a.get<double>("gap_tolerance", 0.0);

  LearnerTuning tuning;
  tuning.min_visits = a.get<std::size_t>("min_visits", tuning.min_visits);
  tuning.depth_cap = a.get<std::size_t>("depth_cap", tuning.depth_cap);
  if (a.has("floor")) tuning.distinguishability_floor = a.require<double>("floor");
  if (a.has("split_score")) tuning.forced_split_score = a.require<double>("split_score");

  x.alg1.epsilon = x.alg2.epsilon = x.epsilon;
  x.alg1.delta = x.alg2.delta = delta;
  x.alg1.learner = x.alg2.learner = tuning;
  x.alg2.n_hat = a.get<std::size_t>("n_hat", 1);
  if (x.alg2.n_hat == 0) throw UsageError("algorithm.n_hat must be at least 1");
  x.alg2.relearn_every = a.get<std::size_t>("relearn_every", 0);
  x.baseline.history_cap = a.get<std::size_t>("history_cap", x.baseline.history_cap);
  x.baseline.merge_tolerance = a.get<double>("merge_tolerance", x.baseline.merge_tolerance);
  x.baseline.min_visits = a.get<std::size_t>("baseline_min_visits", x.baseline.min_visits);
  a.finish();

  ParamReader r(sections["run"], "run");
  if (r.has("seeds")) {
    for (const auto& s : split_list(r.raw("seeds"))) cfg.seeds.push_back(parse_value<std::uint64_t>("run.seeds", s));
  }
  x.workers = r.get<std::size_t>("workers", 0);
  if (r.has("output")) {
    cfg.output = r.raw("output");
    if (cfg.output.is_relative()) cfg.output = path.parent_path() / cfg.output;
  }
  r.finish();
  return cfg;
}

namespace {

std::uint64_t default_seed() {
  if (const char* env = std::getenv("RDPKIT_SEED")) return parse_value<std::uint64_t>("RDPKIT_SEED", env);
  return 0;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_learn(const std::string& config_path, const std::string& out_override,
              const std::vector<std::uint64_t>& seed_override, std::size_t workers, bool workers_set,
              std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(config_path);
  if (!out_override.empty()) cfg.output = out_override;
  if (!seed_override.empty()) cfg.seeds = seed_override;
  if (cfg.seeds.empty()) cfg.seeds.push_back(default_seed());
  if (workers_set) cfg.experiment.workers = workers;
  const Rdp rdp = build_environment(cfg.env_kind, cfg.env_params);

  std::vector<RunArtifacts> artifacts;
  const auto records = run_pac_experiment(rdp, cfg.experiment, cfg.seeds, &artifacts);

  std::filesystem::create_directories(cfg.output);
  write_file(cfg.output / "results.csv", experiment_csv(records));
  bool all_success = true;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    const std::string stem = "seed-" + std::to_string(cfg.seeds[i]);
    std::ostringstream log;
    write_episodes(log, artifacts[i].episodes);
    write_file(cfg.output / (stem + ".episodes"), log.str());
    if (const auto& policy = artifacts[i].final_policy) {
      write_file(cfg.output / (stem + ".policy"), serialize_automaton(*policy));
      write_file(cfg.output / (stem + ".dot"), export_dot(*policy));
    }
    for (const auto& e : artifacts[i].errors) err << "seed " << cfg.seeds[i] << ": skipped emission: " << e << '\n';
  }
  for (const auto& r : records) {
    out << "seed " << r.seed << ": " << r.emissions.size() << " policies, ";
    if (r.success) {
      out << "sustained epsilon-optimal from " << *r.steps_to_sustained << " action steps\n";
    } else {
      out << "no sustained epsilon-optimal point before the cap\n";
      all_success = false;
    }
  }
  out << "wrote " << (cfg.output / "results.csv").string() << '\n';
  return all_success ? kExitOk : kExitCapReached;
}

int cmd_evaluate(const std::string& rdp_path, const std::string& policy_path, double tolerance,
                 std::ostream& out, std::ostream& err) {
  const Rdp rdp = load_rdp(rdp_path);
  Automaton automaton = load_automaton(policy_path);
  const auto* policy = std::get_if<PolicyTransducer>(&automaton);
  if (!policy) throw UsageError(policy_path + " holds a PDFA, not a policy");
  for (const auto& token : policy->observations().tokens()) {
    if (!rdp.observations().find(token)) throw UsageError("policy observation '" + token + "' is not an RDP observation");
  }
  for (const auto& token : policy->actions().tokens()) {
    if (!rdp.actions().find(token)) throw UsageError("policy action '" + token + "' is not an RDP action");
  }
  if (!(tolerance > 0.0)) throw UsageError("tolerance must be positive");
  const GapResult g = optimality_gap(rdp, *policy, tolerance);
  if (g.fallback_incidents > 0) {
    err << "warning: " << g.fallback_incidents
        << " reachable (state, observation) pairs leave the policy's defined transitions\n";
  }
  out << format_number(g.policy_value) << ' ' << format_number(g.optimal_value) << ' ' << format_number(g.gap)
      << '\n';
  return kExitOk;
}

int cmd_export_dot(const std::string& in_path, const std::string& out_path, std::ostream& out) {
  std::ifstream in(in_path);
  if (!in) throw UsageError("cannot open " + in_path);
  std::string first;
  std::getline(in, first);
  in.seekg(0);
  const std::string dot = first.rfind("rdpkit-rdp", 0) == 0 ? export_dot(parse_rdp(in).dynamics())
                                                             : export_dot(parse_automaton(in));
  if (out_path.empty() || out_path == "-") {
    out << dot;
  } else {
    write_file(out_path, dot);
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Learning and evaluating regular decision processes", "rdpkit");
  app.require_subcommand(1);
  app.set_version_flag("--version", "rdpkit 1.0");

  auto* gen = app.add_subcommand("gen-env", "Write a generated environment in rdpkit-rdp v1 format");
  std::string kind, out_path;
  Params gen_params;
  gen->add_option("kind", kind, "grid, chain, parity or mab")->required();
  gen->add_option("-o,--out", out_path, "Output file (default: standard output)");
  struct Flag {
    const char* flag;
    const char* key;
    const char* help;
  };
  const Flag gen_flags[] = {
      {"--m", "m", "Grid size or parity length"},
      {"--p0", "p0", "Grid enemy probabilities for b = 0, comma separated"},
      {"--p1", "p1", "Grid enemy probabilities for b = 1, comma separated"},
      {"--gamma", "gamma", "Discount factor"},
      {"--n", "n", "Chain length"},
      {"--good-action", "good_action", "Chain action rewarded at the end"},
      {"--with-ended", "with_ended", "Chain variant that may end early (true/false)"},
      {"--num-actions", "num_actions", "Chain action count"},
      {"--subset", "subset", "Parity bit mask: bit i-1 selects x_i"},
      {"--noise", "noise", "Parity observation noise"},
      {"--arms", "arms", "Bandit success probabilities, comma separated"},
  };
  std::map<std::string, std::string> gen_values;
  for (const auto& f : gen_flags) gen->add_option(f.flag, gen_values[f.key], f.help);

  auto* learn = app.add_subcommand("learn", "Run a learning experiment from an INI config file");
  std::string config_path, learn_out;
  std::vector<std::uint64_t> seeds;
  std::size_t workers = 0;
  learn->add_option("config", config_path, "Run configuration")->required();
  learn->add_option("-o,--out", learn_out, "Output directory (overrides [run] output)");
  learn->add_option("--seeds", seeds, "Seeds (override [run] seeds)")->delimiter(',');
  auto* workers_opt = learn->add_option("--workers", workers, "Worker threads (0: all cores)");

  auto* evaluate = app.add_subcommand("evaluate", "Print policy value, optimal value and gap");
  std::string rdp_path, policy_path;
  double tolerance = 1e-6;
  evaluate->add_option("rdp", rdp_path, "Environment file")->required();
  evaluate->add_option("policy", policy_path, "Policy automaton file")->required();
  evaluate->add_option("--tolerance", tolerance, "Evaluation tolerance")->capture_default_str();

  auto* dot = app.add_subcommand("export-dot", "Render an automaton or environment as Graphviz DOT");
  std::string dot_in, dot_out;
  dot->add_option("input", dot_in, "Automaton or environment file")->required();
  dot->add_option("output", dot_out, "Output file (default: standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      for (const auto& [key, value] : gen_values) {
        if (!value.empty()) gen_params[key] = value;
      }
      const Rdp rdp = build_environment(kind, gen_params);
      if (out_path.empty() || out_path == "-") {
        out << serialize_rdp(rdp);
      } else {
        write_file(out_path, serialize_rdp(rdp));
      }
      return kExitOk;
    }
    if (learn->parsed()) return cmd_learn(config_path, learn_out, seeds, workers, workers_opt->count() > 0, out, err);
    if (evaluate->parsed()) return cmd_evaluate(rdp_path, policy_path, tolerance, out, err);
    if (dot->parsed()) return cmd_export_dot(dot_in, dot_out, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace rdpkit::cli
