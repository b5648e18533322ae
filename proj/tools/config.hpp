#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hinv/projective.hpp"

namespace hinv::cli {

using KeyValues = std::map<std::string, std::string>;

struct StageConfig {
  std::string name;
  KeyValues params;
};

struct ExperimentConfig {
  std::string source;  // file path or a label for in-memory text
  std::string text;    // raw contents, hashed into the manifest
  std::vector<Mat> matrices;
  std::vector<double> control_lo;
  std::vector<double> control_hi;
  int resolution = 0;  // 0: default for the grid dimension
  std::optional<std::uint64_t> seed;
  std::string output_dir = "out";
  unsigned threads = 1;
  std::vector<StageConfig> stages;       // pipeline order
  std::map<std::string, KeyValues> sections;  // per-stage sections as written

  int ambient_dimension() const { return matrices.empty() ? 0 : static_cast<int>(matrices.front().rows()); }
  int control_dimension() const { return static_cast<int>(control_lo.size()); }
  BilinearSystem system() const;
};

// Sectioned key = value text with [system], [grid], [run], [pipeline] and
// one optional section per analysis. Throws Error(ConfigInvalid).
ExperimentConfig parse_config(std::istream& in, const std::string& source);
ExperimentConfig load_config(const std::filesystem::path& path);

std::vector<double> parse_numbers(const std::string& text, const std::string& what);

}  // namespace hinv::cli
