#include <iostream>

#include <CLI11.hpp>

#include "experiment.hpp"

int main(int argc, char** argv) {
  using namespace hinv::cli;
  CLI::App app{"invariance entropy estimates for bilinear control systems"};
  app.require_subcommand(1);

  RunOverrides overrides;
  std::string output_dir;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  auto* out_opt = app.add_option("--output-dir", output_dir, "directory for CSV files and the manifest");
  auto* thr_opt = app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed, overrides the config");

  std::string config;
  auto* run = app.add_subcommand("run", "run the pipeline of a config");
  run->add_option("config", config, "config file")->required();
  auto* validate = app.add_subcommand("validate", "check a config without running it");
  validate->add_option("config", config, "config file")->required();
  auto* list = app.add_subcommand("list-analyses", "print the available analyses");
  run->fallthrough();
  validate->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (*out_opt) overrides.output_dir = output_dir;
  if (*thr_opt) overrides.threads = threads;
  if (*seed_opt) overrides.seed = seed;

  if (*list) {
    for (const auto& a : analyses()) {
      std::cout << a.name << (a.stochastic ? " (stochastic)" : "") << ": " << a.summary << '\n';
      std::cout << "  requires:";
      for (const auto& r : a.requires_artifacts) std::cout << ' ' << r;
      for (const auto& r : a.optional_artifacts) std::cout << ' ' << r << "(optional)";
      std::cout << "\n  produces:";
      for (const auto& r : a.produces) std::cout << ' ' << r;
      std::cout << '\n';
    }
    return 0;
  }
  if (*validate) {
    try {
      validate_experiment(load_config(config), overrides);
    } catch (const std::exception& e) {
      std::cerr << "invalid config: " << e.what() << '\n';
      return 2;
    }
    std::cout << "config ok\n";
    return 0;
  }
  const auto res = run_config_file(config, overrides, std::cout, std::cerr);
  if (res.exit_code == 0) std::cout << "wrote " << res.files.size() << " files to " << res.output_dir.string() << '\n';
  return res.exit_code;
}
