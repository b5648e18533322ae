#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace hinv::cli {

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

KeyValues section_values(const boost::property_tree::ptree& sec, const std::string& name) {
  KeyValues kv;
  for (const auto& [key, node] : sec) {
    if (!node.empty()) invalid("section [" + name + "] has a nested entry '" + key + "'");
    kv[key] = trim(node.data());
  }
  return kv;
}

std::uint64_t parse_unsigned(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    invalid(what + " must be a nonnegative integer, got '" + text + "'");
  }
  if (used != text.size()) invalid(what + " must be a nonnegative integer, got '" + text + "'");
  return v;
}

Mat square_matrix(const std::vector<double>& entries, int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = entries[static_cast<std::size_t>(i * n + j)];
  return m;
}

}  // namespace

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::string s = text;
  for (char& c : s)
    if (c == ',') c = ' ';
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size() || !std::isfinite(v)) invalid(what + ": '" + tok + "' is not a finite number");
    out.push_back(v);
  }
  return out;
}

BilinearSystem ExperimentConfig::system() const {
  return BilinearSystem(matrices, ControlRange(control_lo, control_hi));
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  cfg.source = source;
  {
    std::ostringstream raw;
    raw << in.rdbuf();
    cfg.text = raw.str();
  }
  boost::property_tree::ptree tree;
  try {
    std::istringstream again(cfg.text);
    boost::property_tree::ini_parser::read_ini(again, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    invalid(source + ": line " + std::to_string(e.line()) + ": " + e.message());
  }

  std::set<std::string> seen;
  for (const auto& [name, node] : tree) {
    if (node.empty() && !node.data().empty()) invalid("key '" + name + "' appears outside any section");
    seen.insert(name);
  }
  if (!seen.count("system")) invalid("missing [system] section");
  if (!seen.count("pipeline")) invalid("missing [pipeline] section");

  // system
  KeyValues sys = section_values(tree.get_child("system"), "system");
  if (!sys.count("control_lo") || !sys.count("control_hi")) invalid("[system] needs control_lo and control_hi");
  cfg.control_lo = parse_numbers(sys["control_lo"], "control_lo");
  cfg.control_hi = parse_numbers(sys["control_hi"], "control_hi");
  if (cfg.control_lo.empty() || cfg.control_lo.size() != cfg.control_hi.size())
    invalid("control_lo and control_hi must list the same nonzero number of values");
  for (std::size_t i = 0; i < cfg.control_lo.size(); ++i)
    if (cfg.control_lo[i] > cfg.control_hi[i]) invalid("control_lo exceeds control_hi on axis " + std::to_string(i));
  const int m = cfg.control_dimension();
  if (!sys.count("A0")) invalid("[system] needs matrix A0");
  const auto a0 = parse_numbers(sys["A0"], "matrix A0");
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(a0.size()))));
  if (n * n != static_cast<int>(a0.size()) || n == 0)
    invalid("matrix A0 has " + std::to_string(a0.size()) + " entries, which is not a square count");
  if (sys.count("dimension")) {
    const auto d = parse_unsigned(sys["dimension"], "dimension");
    if (static_cast<int>(d) != n) invalid("matrix A0 is " + std::to_string(n) + "x" + std::to_string(n) +
                                          " but dimension = " + std::to_string(d));
  }
  if (n < 2 || n > kMaxAmbient)
    invalid("matrix A0 is " + std::to_string(n) + "x" + std::to_string(n) + "; supported sizes are 2..." +
            std::to_string(kMaxAmbient));
  for (int i = 0; i <= m; ++i) {
    const std::string key = "A" + std::to_string(i);
    if (!sys.count(key)) invalid("[system] needs matrix " + key + " for a " + std::to_string(m) + "-axis control range");
    const auto e = parse_numbers(sys[key], "matrix " + key);
    if (static_cast<int>(e.size()) != n * n)
      invalid("matrix " + key + " has " + std::to_string(e.size()) + " entries but A0 is " + std::to_string(n) + "x" +
              std::to_string(n) + " (" + std::to_string(n * n) + " entries)");
    cfg.matrices.push_back(square_matrix(e, n));
  }
  for (const auto& [key, value] : sys) {
    if (key == "control_lo" || key == "control_hi" || key == "dimension") continue;
    if (key.size() > 1 && key[0] == 'A' && key.find_first_not_of("0123456789", 1) == std::string::npos) {
      if (std::stoi(key.substr(1)) > m)
        invalid("matrix " + key + " given but the control range has " + std::to_string(m) + " axis/axes");
      continue;
    }
    invalid("[system] has unknown key '" + key + "'");
  }
  try {
    (void)cfg.system();
  } catch (const Error& e) {
    invalid(std::string("system: ") + e.what());
  }

  // grid
  if (seen.count("grid")) {
    for (const auto& [key, value] : section_values(tree.get_child("grid"), "grid")) {
      if (key == "resolution") {
        cfg.resolution = static_cast<int>(parse_unsigned(value, "grid resolution"));
        if (cfg.resolution < 4) invalid("grid resolution must be at least 4");
      } else if (key == "dimension") {
        if (static_cast<int>(parse_unsigned(value, "grid dimension")) != n - 1)
          invalid("grid dimension " + value + " does not match the projective dimension " + std::to_string(n - 1) +
                  " of A0");
      } else {
        invalid("[grid] has unknown key '" + key + "'");
      }
    }
  }

  // run
  if (seen.count("run")) {
    for (const auto& [key, value] : section_values(tree.get_child("run"), "run")) {
      if (key == "seed") {
        cfg.seed = parse_unsigned(value, "seed");
      } else if (key == "output_dir") {
        if (value.empty()) invalid("output_dir must not be empty");
        cfg.output_dir = value;
      } else if (key == "threads") {
        cfg.threads = static_cast<unsigned>(parse_unsigned(value, "threads"));
        if (cfg.threads == 0) invalid("threads must be at least 1");
      } else {
        invalid("[run] has unknown key '" + key + "'");
      }
    }
  }

  // pipeline
  const KeyValues pipe = section_values(tree.get_child("pipeline"), "pipeline");
  for (const auto& [key, value] : pipe)
    if (key != "stages") invalid("[pipeline] has unknown key '" + key + "'");
  if (!pipe.count("stages")) invalid("[pipeline] needs a stages list");
  {
    std::string s = pipe.at("stages");
    for (char& c : s)
      if (c == ',') c = ' ';
    std::istringstream names(s);
    std::string name;
    while (names >> name) cfg.stages.push_back({name, {}});
  }
  if (cfg.stages.empty()) invalid("[pipeline] stages list is empty");

  for (const auto& [name, node] : tree) {
    if (name == "system" || name == "grid" || name == "run" || name == "pipeline") continue;
    cfg.sections[name] = section_values(node, name);
  }
  for (auto& st : cfg.stages) {
    auto it = cfg.sections.find(st.name);
    if (it != cfg.sections.end()) st.params = it->second;
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot read config file " + path.string());
  return parse_config(in, path.string());
}

}  // namespace hinv::cli
