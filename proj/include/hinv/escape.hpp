#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "hinv/cocycle.hpp"
#include "hinv/grid.hpp"
#include "hinv/projective.hpp"

namespace hinv {

// Fiber Q(theta_{j h} u) for the j-th sampling time.
using FiberProvider = std::function<CellSet(int j)>;

struct EscapeOptions {
  double epsilon = 0.1;
  int n_max = 40;
  double step = 1.0;
  double max_step = 0.5;
  int max_depth = 0;      // 0: 200 on RP^1, 8 on RP^2
  int probe_levels = -1;  // refinements allowed below a leaf with no passing sample; -1: 4 on RP^1, 1 on RP^2
  std::size_t leaf_budget = 200000;
  int samples_per_axis = 3;
};

struct SurvivorLeaf {
  CellIndex cell;
  ChartBox box;
  int depth = 0;
  int misses = 0;
};

struct EscapeTrace {
  CocycleTrace log_volume;    // v_n = log vol Q_d(n), -inf once empty
  std::vector<double> volume;
  std::vector<double> rate;   // -v_n / (n h)
  std::vector<std::size_t> leaves;
  int empty_from = 0;         // first n with no survivors, 0 if none
  bool budget_hit = false;
  std::vector<SurvivorLeaf> survivors;  // leaves alive at n_max
};

namespace detail {

struct EscapeSetup {
  std::vector<std::vector<Vec>> fiber_centers;
  std::vector<Mat> maps;
  double chord = 0.0;
};

inline bool near_any(const Vec& y, const std::vector<Vec>& centers, double chord) {
  for (const Vec& c : centers)
    if ((y - c).norm() <= chord || (y + c).norm() <= chord) return true;
  return false;
}

// Number of leaf samples that stay eps-close to the fibers at times 0..n-1.
inline int passing_samples(const ProjectiveGrid& grid, const SurvivorLeaf& leaf, int n, const EscapeSetup& s,
                           int per_axis) {
  int passed = 0;
  for (Vec y : grid.box_samples(leaf.cell, leaf.box, per_axis)) {
    bool ok = true;
    for (int j = 0; j < n && ok; ++j) {
      if (j > 0) y = normalized(s.maps[static_cast<std::size_t>(j - 1)] * y);
      ok = near_any(y, s.fiber_centers[static_cast<std::size_t>(j)], s.chord);
    }
    if (ok) ++passed;
  }
  return passed;
}

inline std::vector<SurvivorLeaf> split_leaf(const SurvivorLeaf& leaf, int d, int misses) {
  std::vector<SurvivorLeaf> out;
  const ChartBox& b = leaf.box;
  const double m0 = 0.5 * (b.lo[0] + b.hi[0]);
  if (d == 1) {
    out.push_back({leaf.cell, {{b.lo[0], 0.0}, {m0, 0.0}}, leaf.depth + 1, misses});
    out.push_back({leaf.cell, {{m0, 0.0}, {b.hi[0], 0.0}}, leaf.depth + 1, misses});
    return out;
  }
  const double m1 = 0.5 * (b.lo[1] + b.hi[1]);
  const double xs[3] = {b.lo[0], m0, b.hi[0]};
  const double ys[3] = {b.lo[1], m1, b.hi[1]};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out.push_back({leaf.cell, {{xs[i], ys[j]}, {xs[i + 1], ys[j + 1]}}, leaf.depth + 1, misses});
  return out;
}

}  // namespace detail

// Volumes of Q_d(n) = {x : dist(phi(j h, x, u), Q(theta_{j h} u)) <= eps, 0 <= j < n}
// by adaptive subdivision of chart boxes. Survivor leaves at n+1 are drawn from
// those at n, so the volume sequence is nonincreasing.
inline EscapeTrace escape_rate_trace(const BilinearSystem& sys, const ProjectiveGrid& grid, const FiberProvider& fibers,
                                     const PiecewiseConstantControl& u, const EscapeOptions& opts) {
  require(grid.dimension() == sys.projective_dimension(), "grid and system dimensions differ");
  require(opts.epsilon > 0.0 && opts.n_max >= 1 && opts.step > 0.0, "escape needs eps > 0, n_max >= 1, step > 0");
  const int d = grid.dimension();
  const int max_depth = opts.max_depth > 0 ? opts.max_depth : (d == 1 ? 200 : 8);
  const int probe = opts.probe_levels >= 0 ? opts.probe_levels : (d == 1 ? 4 : 1);
  detail::EscapeSetup setup;
  setup.chord = 2.0 * std::sin(0.5 * std::min(opts.epsilon, 0.5 * std::numbers::pi)) + 1e-12;
  for (int j = 0; j < opts.n_max; ++j) {
    std::vector<Vec> centers;
    for (CellIndex c : fibers(j)) centers.push_back(grid.center(c));
    setup.fiber_centers.push_back(std::move(centers));
    setup.maps.push_back(transfer_matrix(sys, u, j * opts.step, (j + 1) * opts.step, opts.max_step));
  }

  EscapeTrace tr;
  tr.log_volume.cocycle = "log_volume";
  tr.log_volume.kind = CocycleKind::Subadditive;
  std::vector<SurvivorLeaf> alive;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const auto cell = static_cast<CellIndex>(c);
    const double r = opts.epsilon + grid.radius(cell);
    if (r >= 0.5 * std::numbers::pi || detail::near_any(grid.center(cell), setup.fiber_centers.front(), 2.0 * std::sin(0.5 * r)))
      alive.push_back({cell, grid.box(cell), 0, 0});
  }
  const int total = d == 1 ? opts.samples_per_axis : opts.samples_per_axis * opts.samples_per_axis;
  for (int n = 1; n <= opts.n_max; ++n) {
    std::vector<SurvivorLeaf> next;
    std::vector<SurvivorLeaf> work(alive.rbegin(), alive.rend());
    while (!work.empty()) {
      SurvivorLeaf leaf = work.back();
      work.pop_back();
      const int passed = detail::passing_samples(grid, leaf, n, setup, opts.samples_per_axis);
      if (passed == total) {
        leaf.misses = 0;
        next.push_back(leaf);
        continue;
      }
      const int misses = passed == 0 ? leaf.misses + 1 : 0;
      if (misses > probe || leaf.depth >= max_depth) continue;
      if (next.size() + work.size() >= opts.leaf_budget) {
        tr.budget_hit = true;
        continue;
      }
      auto kids = detail::split_leaf(leaf, d, misses);
      for (auto it = kids.rbegin(); it != kids.rend(); ++it) work.push_back(*it);
    }
    alive = std::move(next);
    double vol = 0.0;
    for (const auto& leaf : alive) vol += grid.chart_volume(leaf.cell, leaf.box);
    const double v = alive.empty() ? -std::numeric_limits<double>::infinity() : std::log(vol);
    if (alive.empty() && tr.empty_from == 0) tr.empty_from = n;
    tr.log_volume.push(n, v);
    tr.volume.push_back(vol);
    tr.rate.push_back(-v / (n * opts.step));
    tr.leaves.push_back(alive.size());
  }
  tr.survivors = std::move(alive);
  return tr;
}

// Constant-in-time fiber, for fibers that do not depend on the shift.
inline FiberProvider constant_fiber(CellSet fiber) {
  return [f = std::move(fiber)](int) { return f; };
}

}  // namespace hinv
