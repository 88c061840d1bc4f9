// SPDX-License-Identifier: Apache-2.0
#include "phred/error.hpp"
#include "phred/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

namespace {

int report(const phred::Error& e) {
  std::cerr << "error";
  if (!e.stage().empty()) std::cerr << " [" << e.stage() << "]";
  std::cerr << " (" << phred::to_string(e.code()) << "): " << e.what() << "\n";
  return e.is_config_error() ? 1 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("PHRED_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));

  CLI::App app{"Structure-preserving reduction of nonlinear port-Hamiltonian systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string basis_dir;
  bool seed_set = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--seed", seed, "random seed (overrides config)")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--threads", threads, "worker threads (overrides config)");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "integrate the full model");
  CLI::App* reduce = app.add_subcommand("reduce", "build and store a reduced model");
  CLI::App* evaluate = app.add_subcommand("evaluate", "compare reduced and full trajectories");
  CLI::App* bounds = app.add_subcommand("bounds", "evaluate a-posteriori error bounds");
  CLI::App* sweep = app.add_subcommand("sweep", "error table over methods and orders");
  for (CLI::App* s : {simulate, reduce, evaluate, bounds, sweep}) add_common(s);
  evaluate->add_option("--basis", basis_dir, "directory written by `reduce`");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    phred::RunConfig cfg = phred::load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_set) cfg.seed = seed;
    if (threads > 0) cfg.threads = threads;
    if (!basis_dir.empty()) cfg.basis_dir = basis_dir;
    cfg.bounds.seed = cfg.seed;

    if (*simulate) phred::cmd_simulate(cfg);
    if (*reduce) phred::cmd_reduce(cfg);
    if (*evaluate) phred::cmd_evaluate(cfg);
    if (*bounds) phred::cmd_bounds(cfg);
    if (*sweep) phred::cmd_sweep(cfg);
  } catch (const phred::Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
