#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli/commands.hpp"

using namespace abspread::cli;

int main(int argc, char** argv) {
  CLI::App app{"abspread: two-type random walk infection simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--replicas", replicas, "replica count");
  app.add_option("--out", out, "output directory");
  app.add_option("--threads", threads, "worker threads (0: available parallelism)");
  app.add_option("--set", sets, "KEY=VALUE override, repeatable");

  auto* run = app.add_subcommand("run", "simulate replicas and write the time series and summary");
  auto* analyze = app.add_subcommand("analyze", "re-run statistical checks over a run directory");
  std::string analyze_dir;
  std::vector<std::string> checks;
  analyze->add_option("dir", analyze_dir, "run directory")->required();
  analyze->add_option("--checks", checks, "speed, bounds, stationarity, martingale")->delimiter(',');
  auto* validate = app.add_subcommand("validate", "print the multiscale constants report");
  auto* sweep = app.add_subcommand("sweep", "run a cartesian parameter grid");
  std::vector<std::string> grid_axes;
  sweep->add_option("--grid", grid_axes, "KEY=v1,v2,..., repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const auto& s : sets) apply_override(cfg, s);
    if (seed) cfg.seed = *seed;
    if (replicas) cfg.replicas = *replicas;
    if (out) cfg.out = *out;
    if (threads) cfg.threads = *threads;

    if (*run) return cmd_run(cfg, std::cerr);
    if (*analyze) return cmd_analyze(analyze_dir, {checks.begin(), checks.end()}, std::cerr);
    if (*validate) {
      cfg.validate();
      return cmd_validate(cfg, std::cout);
    }
    if (*sweep) {
      Grid grid;
      for (const auto& a : grid_axes) grid.push_back(parse_grid_axis(a));
      return cmd_sweep(cfg, grid, std::cerr);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFail;
  }
  return kUsage;
}
