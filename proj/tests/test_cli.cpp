#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "rdpkit/automaton_io.hpp"
#include "rdpkit/environments.hpp"
#include "support.hpp"

using namespace rdpkit;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rdpkit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("gen-env") {
  test::TempDir dir("cli-gen");
  const auto path = (dir / "grid.rdp").string();
  auto r = run_cli({"gen-env", "grid", "--m", "2", "--p0", "0.7,0.7", "--p1", "0.3,0.3", "--gamma", "0.9", "-o", path});
  REQUIRE(r.code == cli::kExitOk);
  const std::string first = slurp(path);
  CHECK(load_rdp(path).num_states() == 4);

  REQUIRE(run_cli({"gen-env", "grid", "--m", "2", "--p0", "0.7,0.7", "--p1", "0.3,0.3", "--gamma", "0.9", "-o", path})
              .code == cli::kExitOk);
  CHECK(slurp(path) == first);

  auto bad = run_cli({"gen-env", "grid", "--m", "2", "--p0", "1.2,0.7", "--p1", "0.3,0.3"});
  CHECK(bad.code == cli::kExitUsage);
  CHECK_FALSE(bad.err.empty());

  CHECK(run_cli({"gen-env", "mab", "--arms", "0.3,0.8"}).out.rfind("rdpkit-rdp v1", 0) == 0);
  CHECK(run_cli({"gen-env", "chain", "--n", "3", "--good-action", "1"}).code == cli::kExitOk);
  CHECK(run_cli({"gen-env", "parity", "--m", "2", "--subset", "3", "--noise", "0.2"}).code == cli::kExitOk);
  CHECK(run_cli({"gen-env", "grid"}).code == cli::kExitUsage);
  CHECK(run_cli({"gen-env", "nonsense"}).code == cli::kExitUsage);
  CHECK(run_cli({"--bogus"}).code == cli::kExitUsage);
  CHECK(run_cli({"--help"}).code == cli::kExitOk);
}

TEST_CASE("evaluate") {
  test::TempDir dir("cli-eval");
  Rdp mab = make_mab_rdp({0.3, 0.8});
  save_rdp(dir / "mab.rdp", mab);
  PolicyTransducer worst(Transducer<SymbolId>(mab.observations(), 0, {0, 0, 0}, {0}), mab.actions());
  save_automaton(dir / "worst.policy", worst);
  PolicyTransducer best(Transducer<SymbolId>(mab.observations(), 0, {0, 0, 0}, {1}), mab.actions());
  save_automaton(dir / "best.policy", best);

  auto r = run_cli({"evaluate", (dir / "mab.rdp").string(), (dir / "worst.policy").string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out == "0.300000 0.800000 0.500000\n");

  r = run_cli({"evaluate", (dir / "mab.rdp").string(), (dir / "best.policy").string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out == "0.800000 0.800000 0.000000\n");

  PolicyTransducer alien(Transducer<SymbolId>(Alphabet({"x"}), 0, {0}, {0}), mab.actions());
  save_automaton(dir / "alien.policy", alien);
  CHECK(run_cli({"evaluate", (dir / "mab.rdp").string(), (dir / "alien.policy").string()}).code == cli::kExitUsage);

  save_automaton(dir / "model.pdfa", rdp_to_pdfa(mab, 0.5));
  CHECK(run_cli({"evaluate", (dir / "mab.rdp").string(), (dir / "model.pdfa").string()}).code == cli::kExitUsage);
  CHECK(run_cli({"evaluate", (dir / "missing.rdp").string(), (dir / "best.policy").string()}).code ==
        cli::kExitUsage);
}

TEST_CASE("learn") {
  test::TempDir dir("cli-learn");
  run_cli({"gen-env", "grid", "--m", "2", "--p0", "0.7,0.7", "--p1", "0.3,0.3", "-o", (dir / "grid.rdp").string()});

  SUBCASE("a tiny cap reaches no sustained point") {
    write(dir / "cap.ini",
          "[env]\nkind = file\npath = grid.rdp\n[algorithm]\nname = alg2\nn_hat = 4\nstep_cap = 10\n"
          "[run]\nseeds = 1\noutput = out-cap\n");
    auto r = run_cli({"learn", (dir / "cap.ini").string()});
    CHECK(r.code == cli::kExitCapReached);
    CHECK(std::filesystem::exists(dir / "out-cap" / "results.csv"));
  }
  SUBCASE("grid run is reproducible and writes its artifacts") {
    write(dir / "run.ini",
          "[env]\nkind = grid\nm = 2\np0 = 0.7,0.7\np1 = 0.3,0.3\n[algorithm]\nname = alg2\nn_hat = 4\n"
          "step_cap = 200000\n[run]\nseeds = 3\noutput = out\n");
    auto r = run_cli({"learn", (dir / "run.ini").string()});
    CHECK(r.code == cli::kExitOk);
    const std::string csv = slurp(dir / "out" / "results.csv");
    CHECK(csv.rfind("seed,emission_index,action_steps,policy_value,optimal_value,gap,sustained\n", 0) == 0);
    CHECK(std::filesystem::exists(dir / "out" / "seed-3.episodes"));
    CHECK(std::filesystem::exists(dir / "out" / "seed-3.dot"));
    REQUIRE(std::filesystem::exists(dir / "out" / "seed-3.policy"));

    auto again = run_cli({"learn", (dir / "run.ini").string(), "-o", (dir / "out2").string()});
    CHECK(again.code == cli::kExitOk);
    CHECK(slurp(dir / "out2" / "results.csv") == csv);

    auto eval = run_cli({"evaluate", (dir / "grid.rdp").string(), (dir / "out" / "seed-3.policy").string()});
    CHECK(eval.code == cli::kExitOk);
    double value = 0, optimal = 0, gap = 1;
    std::istringstream(eval.out) >> value >> optimal >> gap;
    CHECK(gap <= 0.1);
  }
  SUBCASE("config errors") {
    write(dir / "bad.ini", "[env]\nkind = grid\nm = 2\np0 = 0.7,0.7\np1 = 0.3,0.3\n[algorithm]\nbogus = 1\n");
    CHECK(run_cli({"learn", (dir / "bad.ini").string()}).code == cli::kExitUsage);
    write(dir / "section.ini", "[env]\nkind = mab\narms = 0.5\n[extra]\nx = 1\n");
    CHECK(run_cli({"learn", (dir / "section.ini").string()}).code == cli::kExitUsage);
    write(dir / "noalg.ini", "[env]\nkind = mab\narms = 0.5\n[algorithm]\nname = magic\n");
    CHECK(run_cli({"learn", (dir / "noalg.ini").string()}).code == cli::kExitUsage);
    CHECK(run_cli({"learn", (dir / "absent.ini").string()}).code == cli::kExitUsage);
  }
  SUBCASE("config keys reach the experiment") {
    write(dir / "keys.ini",
          "[env]\nkind = grid\nm = 2\np0 = 0.7,0.7\np1 = 0.3,0.3\n[algorithm]\nname = baseline\nepsilon = 0.2\n"
          "history_cap = 3\nmerge_tolerance = 0.5\nfloor = 0.2\nsplit_score = 0.5\n[run]\nseeds = 4,5\nworkers = 2\n");
    cli::RunConfig cfg = cli::load_run_config(dir / "keys.ini");
    CHECK(cfg.experiment.algorithm == AlgorithmKind::kBaseline);
    CHECK(cfg.experiment.epsilon == 0.2);
    CHECK(cfg.experiment.baseline.history_cap == 3);
    CHECK(cfg.experiment.baseline.merge_tolerance == 0.5);
    CHECK(cfg.experiment.alg2.learner.distinguishability_floor == 0.2);
    CHECK(cfg.experiment.alg2.learner.forced_split_score == 0.5);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(cfg.experiment.workers == 2);
  }
}

TEST_CASE("export-dot") {
  test::TempDir dir("cli-dot");
  Rdp rdp = test::grid(2);
  save_rdp(dir / "grid.rdp", rdp);
  auto r = run_cli({"export-dot", (dir / "grid.rdp").string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out == export_dot(rdp.dynamics()));

  save_automaton(dir / "grid.pdfa", rdp_to_pdfa(rdp, 0.1));
  const auto out = (dir / "grid.dot").string();
  REQUIRE(run_cli({"export-dot", (dir / "grid.pdfa").string(), out}).code == cli::kExitOk);
  const std::string first = slurp(out);
  REQUIRE(run_cli({"export-dot", (dir / "grid.pdfa").string(), out}).code == cli::kExitOk);
  CHECK(slurp(out) == first);
  std::size_t nodes = 0;
  for (auto pos = first.find("shape="); pos != std::string::npos; pos = first.find("shape=", pos + 1)) ++nodes;
  CHECK(nodes == 4);

  write(dir / "junk.txt", "junk\n");
  CHECK(run_cli({"export-dot", (dir / "junk.txt").string()}).code == cli::kExitUsage);
}
