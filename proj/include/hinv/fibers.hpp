#pragma once

#include <cstdint>
#include <vector>

#include "hinv/grid.hpp"
#include "hinv/projective.hpp"

namespace hinv {

struct FiberOptions {
  double horizon = 20.0;  // T
  double epsilon = 0.0;   // 0 selects one cell radius
  double step = 1.0;      // sampling step h
  double max_step = 0.5;
};

namespace detail {

struct TwoSidedMaps {
  std::vector<Mat> forward;   // [k h, (k+1) h]
  std::vector<Mat> backward;  // [-k h, -(k+1) h]
};

inline TwoSidedMaps two_sided_maps(const BilinearSystem& sys, const PiecewiseConstantControl& u, double horizon,
                                   double step, double max_step) {
  require(step > 0.0 && horizon >= 0.0, "fiber horizon and step must be nonnegative and positive");
  const int k = static_cast<int>(horizon / step + 1e-9);
  TwoSidedMaps maps;
  for (int i = 0; i < k; ++i) {
    maps.forward.push_back(transfer_matrix(sys, u, i * step, (i + 1) * step, max_step));
    maps.backward.push_back(transfer_matrix(sys, u, -i * step, -(i + 1) * step, max_step));
  }
  return maps;
}

inline std::vector<std::uint8_t> indicator(const ProjectiveGrid& grid, const CellSet& s) {
  std::vector<std::uint8_t> m(grid.size(), 0);
  for (CellIndex c : s) m[static_cast<std::size_t>(c)] = 1;
  return m;
}

inline bool stays_in(const ProjectiveGrid& grid, const TwoSidedMaps& maps, const std::vector<std::uint8_t>& inside,
                     const Vec& x) {
  if (!inside[static_cast<std::size_t>(grid.lookup(x))]) return false;
  for (const auto* seq : {&maps.forward, &maps.backward}) {
    Vec y = x;
    for (const Mat& m : *seq) {
      y = normalized(m * y);
      if (!inside[static_cast<std::size_t>(grid.lookup(y))]) return false;
    }
  }
  return true;
}

}  // namespace detail

// Cells of N_eps(Q) whose centers keep their sampled two-sided trajectory
// under u inside N_eps(Q).
inline CellSet fiber_estimate(const BilinearSystem& sys, const ProjectiveGrid& grid, const CellSet& q,
                              const PiecewiseConstantControl& u, const FiberOptions& opts = {}) {
  const double eps = opts.epsilon > 0.0 ? opts.epsilon : grid.max_radius();
  const CellSet hood = grid.fatten(q, eps);
  const auto inside = detail::indicator(grid, hood);
  const auto maps = detail::two_sided_maps(sys, u, opts.horizon, opts.step, opts.max_step);
  std::vector<CellIndex> out;
  for (CellIndex c : hood)
    if (detail::stays_in(grid, maps, inside, grid.center(c))) out.push_back(c);
  return CellSet(std::move(out));
}

struct SemicontinuityProbe {
  std::vector<double> hausdorff;  // d_H(Q(u_k), Q(u))
  std::vector<double> excess;     // sup over Q(u) of the distance to Q(u_k)
};

inline SemicontinuityProbe lsc_probe(const BilinearSystem& sys, const ProjectiveGrid& grid, const CellSet& q,
                                     const PiecewiseConstantControl& u,
                                     const std::vector<PiecewiseConstantControl>& sequence, const FiberOptions& opts = {}) {
  const CellSet limit = fiber_estimate(sys, grid, q, u, opts);
  SemicontinuityProbe out;
  for (const auto& uk : sequence) {
    const CellSet f = fiber_estimate(sys, grid, q, uk, opts);
    out.hausdorff.push_back(grid.hausdorff(f, limit));
    double e = 0.0;
    for (CellIndex c : limit) e = std::max(e, grid.distance_to_set(grid.center(c), f));
    out.excess.push_back(limit.empty() ? 0.0 : e);
  }
  return out;
}

struct IsolationWitness {
  Vec point;
  int control = 0;
  double distance_to_fiber = 0.0;
};

struct IsolationResult {
  bool passed = true;
  std::size_t premises = 0;  // sample points whose trajectory stayed in N_deltaN(Q)
  std::vector<IsolationWitness> failures;
};

// Points of N_deltaN(Q) outside one cell of Q that keep their two-sided sampled
// trajectory in N_deltaN(Q) must lie within one cell of the fiber estimate.
inline IsolationResult isolatedness_check(const BilinearSystem& sys, const ProjectiveGrid& grid, const CellSet& q,
                                          double delta_n, const std::vector<PiecewiseConstantControl>& probes,
                                          const FiberOptions& opts = {}, int samples_per_axis = 3) {
  const double cell = 2.0 * grid.max_radius();
  const CellSet outer = grid.fatten(q, delta_n);
  const CellSet ring = outer.subtract(grid.fatten(q, cell));
  const auto inside = detail::indicator(grid, outer);
  IsolationResult res;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const CellSet fiber = fiber_estimate(sys, grid, q, probes[k], opts);
    const auto maps = detail::two_sided_maps(sys, probes[k], opts.horizon, opts.step, opts.max_step);
    for (CellIndex c : ring) {
      for (const Vec& x : grid.sample_points(c, samples_per_axis)) {
        if (!detail::stays_in(grid, maps, inside, x)) continue;
        ++res.premises;
        const double dist = grid.distance_to_set(x, fiber);
        if (dist > cell) {
          res.passed = false;
          res.failures.push_back({x, static_cast<int>(k), dist});
        }
      }
    }
  }
  return res;
}

}  // namespace hinv
