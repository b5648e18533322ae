#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"

namespace hinv::cli {

struct AnalysisInfo {
  std::string name;
  std::vector<std::string> requires_artifacts;
  std::vector<std::string> optional_artifacts;
  std::vector<std::string> produces;
  bool stochastic = false;
  std::string summary;
};

const std::vector<AnalysisInfo>& analyses();

struct RunOverrides {
  std::optional<std::string> output_dir;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
};

// Checks analysis names, per-analysis keys and values, artifact order and the
// seed requirement. Throws Error(ConfigInvalid).
void validate_experiment(const ExperimentConfig& cfg, const RunOverrides& overrides = {});

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 invalid config, 3 numerical failure
  std::string failed_stage;
  std::string message;
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> files;  // relative to output_dir, manifest last
};

RunResult run_experiment(const ExperimentConfig& cfg, const RunOverrides& overrides, std::ostream& log);

// Load, validate and run; diagnostics go to err.
RunResult run_config_file(const std::filesystem::path& path, const RunOverrides& overrides, std::ostream& log,
                          std::ostream& err);

std::string format_number(double v);  // 17 significant digits
std::string sha256_hex(const std::string& bytes);

}  // namespace hinv::cli
