#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hinv/fibers.hpp"
#include "hinv/graph.hpp"
#include "hinv/mean_cycle.hpp"
#include "hinv/separated.hpp"
#include "hinv/upper.hpp"

namespace hinv {

struct ProbedFiber {
  PiecewiseConstantControl control;
  CellSet fiber;
};

struct UpperInputs {
  CellSet k;
  std::vector<PiecewiseConstantControl> family;
  UpperOptions options;
};

struct ReportParams {
  int entropy_horizon = 60;
  double entropy_delta = 0.1;
  double entropy_step = 1.0;
  std::optional<UpperInputs> upper;
};

struct BoundReport {
  double lower_bound = 0.0;
  double mean_log_unstable = 0.0;  // min mean cycle rate
  double fiber_entropy = 0.0;      // max over probed fibers
  double upper_estimate = std::numeric_limits<double>::infinity();
  bool upper_available = false;
  bool sandwich_ok = true;  // lower <= upper + ln 2 / tau
  MeanCycleBound certificate;
  std::vector<EntropyEstimate> entropies;
  std::optional<UpperEstimate> upper;
  std::map<std::string, std::string> diagnostics;
};

inline BoundReport lower_bound_report(const BilinearSystem& sys, const ProjectiveGrid& grid, const TransitionGraph& g,
                                      const CellSet& q, const std::vector<ProbedFiber>& fibers,
                                      const ReportParams& params = {}) {
  BoundReport r;
  r.certificate = min_mean_cycle_bound(g, q);
  r.mean_log_unstable = r.certificate.value;
  for (const auto& pf : fibers) {
    auto e = fiber_entropy_estimate(sys, grid, pf.control, pf.fiber, params.entropy_horizon, params.entropy_delta,
                                    params.entropy_step);
    r.fiber_entropy = std::max(r.fiber_entropy, e.rate);
    r.entropies.push_back(e);
  }
  r.lower_bound = r.mean_log_unstable - r.fiber_entropy;
  r.diagnostics["cycle_length"] = std::to_string(r.certificate.cells.size());
  r.diagnostics["component_cells"] = std::to_string(q.size());
  if (params.upper) {
    const auto& in = *params.upper;
    r.upper = try_invariance_entropy_upper(sys, grid, in.k, q, in.family, in.options);
    r.upper_available = true;
    r.upper_estimate = r.upper->value;
    r.sandwich_ok = r.lower_bound <= r.upper_estimate + std::log(2.0) / in.options.horizon;
    if (!r.upper->coverable) r.diagnostics["upper"] = "uncoverable at cell " + std::to_string(*r.upper->witness);
  }
  return r;
}

}  // namespace hinv
