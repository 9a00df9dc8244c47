// Scenario runner for the organic ambient-intelligence simulator.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "orgami/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitVerdict = 3;
constexpr int kExitRuntime = 4;

struct Options {
  std::string scenario_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t max_states = 0;
  bool quiet = false;
  int jobs = 1;
  int runs = 1;
};

std::string resolve_out_dir(const Options& opt, const std::string& fallback) {
  if (!opt.out_dir.empty()) return opt.out_dir;
  if (const char* env = std::getenv("ORGAMI_OUT")) return env;
  return fallback;
}

orgami::scen::Scenario load(const Options& opt) {
  auto sc = orgami::scen::load_scenario(opt.scenario_path);
  if (opt.seed_set) sc.seed = opt.seed;
  if (opt.max_states > 0) sc.max_states = opt.max_states;
  return sc;
}

int run_one(const Options& opt, orgami::scen::Scenario sc, const std::string& out_dir) {
  const auto bundle = orgami::scen::run_scenario(sc);
  orgami::scen::export_bundle(bundle, out_dir);
  if (!opt.quiet) {
    std::cout << "scenario '" << sc.name << "' (seed " << sc.seed << ") -> " << out_dir << "\n";
    std::cout << bundle.report.dump(2) << "\n";
  }
  return bundle.verdict == 0 ? kExitOk : kExitVerdict;
}

int run_command(const Options& opt, const std::string& required_type = "") {
  auto sc = load(opt);
  if (!required_type.empty() && sc.experiment_type != required_type) {
    std::cerr << "scenario '" << sc.name << "' has experiment type '" << sc.experiment_type
              << "', expected '" << required_type << "'\n";
    return kExitValidation;
  }
  const std::string base = resolve_out_dir(opt, "out/" + sc.name);
  if (opt.runs <= 1) return run_one(opt, sc, base);

  // Seed fan-out: independent runs, one output directory per seed.
  std::vector<int> verdicts(static_cast<std::size_t>(opt.runs), kExitOk);
  std::vector<std::thread> pool;
  std::size_t next = 0;
  const int jobs = std::max(1, opt.jobs);
  for (int w = 0; w < jobs; ++w) pool.emplace_back([&, w] {
    for (std::size_t i = static_cast<std::size_t>(w); i < static_cast<std::size_t>(opt.runs);
         i += static_cast<std::size_t>(jobs)) {
      auto run_sc = sc;
      run_sc.seed = sc.seed + i;
      try {
        const auto bundle = orgami::scen::run_scenario(run_sc);
        orgami::scen::export_bundle(bundle, base + "/seed_" + std::to_string(run_sc.seed));
        verdicts[i] = bundle.verdict == 0 ? kExitOk : kExitVerdict;
      } catch (...) {
        verdicts[i] = kExitRuntime;
      }
    }
  });
  (void)next;
  for (auto& t : pool) t.join();
  int worst = kExitOk;
  for (int v : verdicts) worst = std::max(worst, v);
  if (!opt.quiet) std::cout << opt.runs << " runs under " << base << "\n";
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orgami: cellular-resource-middleware simulator and analysis toolkit"};
  app.require_subcommand(1);

  Options opt;
  app.add_option("--seed", opt.seed, "override the scenario seed")->each([&](std::string) {
    opt.seed_set = true;
  });
  app.add_option("--out", opt.out_dir, "output directory (or env ORGAMI_OUT)");
  app.add_option("--max-states", opt.max_states, "override the state-space exploration cap");
  app.add_flag("--quiet", opt.quiet, "suppress console reports");

  auto* run = app.add_subcommand("run", "run a scenario and export its trace bundle");
  run->fallthrough();
  run->add_option("scenario", opt.scenario_path, "scenario JSON file")->required();
  run->add_option("--runs", opt.runs, "number of seeds to fan out (seed, seed+1, ...)");
  run->add_option("--jobs", opt.jobs, "worker threads for fanned-out runs");

  auto* validate = app.add_subcommand("validate", "schema-check a scenario file");
  validate->fallthrough();
  validate->add_option("scenario", opt.scenario_path, "scenario JSON file")->required();

  auto* analyze = app.add_subcommand("analyze", "run a petri-analysis scenario");
  analyze->fallthrough();
  analyze->add_option("scenario", opt.scenario_path, "scenario JSON file")->required();

  auto* map_cmd = app.add_subcommand("map", "run a deployment-mapping scenario");
  map_cmd->fallthrough();
  map_cmd->add_option("scenario", opt.scenario_path, "scenario JSON file")->required();

  auto* vote_cmd = app.add_subcommand("vote", "run a voting scenario");
  vote_cmd->fallthrough();
  vote_cmd->add_option("scenario", opt.scenario_path, "scenario JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(validate)) {
      const auto sc = load(opt);
      if (!opt.quiet) std::cout << "scenario '" << sc.name << "' is valid\n";
      return kExitOk;
    }
    if (app.got_subcommand(run)) return run_command(opt);
    if (app.got_subcommand(analyze)) return run_command(opt, "petri");
    if (app.got_subcommand(map_cmd)) return run_command(opt, "deploy");
    if (app.got_subcommand(vote_cmd)) return run_command(opt, "vote");
  } catch (const orgami::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  } catch (const orgami::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  } catch (const orgami::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
