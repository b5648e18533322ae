#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hinv/escape.hpp"
#include "hinv/grid.hpp"
#include "hinv/projective.hpp"

namespace hinv {

using Orbit = std::vector<Vec>;

// Greedy maximal (n, delta)-separated subset of the candidates, scanned in
// order: a candidate joins when its Bowen distance to every chosen orbit
// exceeds delta. Returns chosen indices.
template <class Metric>
std::vector<std::size_t> greedy_separated(const std::vector<Orbit>& orbits, int n, double delta, Metric&& metric) {
  require(n >= 1 && delta > 0.0, "separated sets need n >= 1 and delta > 0");
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < orbits.size(); ++i) {
    require(static_cast<int>(orbits[i].size()) >= n, "orbit shorter than the horizon");
    bool far = true;
    for (std::size_t c : chosen) {
      bool separated = false;
      for (int j = n - 1; j >= 0 && !separated; --j)
        separated = metric(orbits[i][static_cast<std::size_t>(j)], orbits[c][static_cast<std::size_t>(j)]) > delta;
      if (!separated) {
        far = false;
        break;
      }
    }
    if (far) chosen.push_back(i);
  }
  return chosen;
}

inline double bowen_distance(const Orbit& a, const Orbit& b, int n) {
  double m = 0.0;
  for (int j = 0; j < n; ++j) m = std::max(m, projective_distance(a[static_cast<std::size_t>(j)], b[static_cast<std::size_t>(j)]));
  return m;
}

// Orbits phi(j h, x, u), j = 0..n-1.
inline std::vector<Orbit> projective_orbits(const BilinearSystem& sys, const PiecewiseConstantControl& u,
                                            const std::vector<Vec>& points, int n, double step, double max_step = 0.5) {
  std::vector<Mat> maps;
  for (int j = 0; j + 1 < n; ++j) maps.push_back(transfer_matrix(sys, u, j * step, (j + 1) * step, max_step));
  std::vector<Orbit> out;
  out.reserve(points.size());
  for (const Vec& p : points) {
    Orbit o{normalized(p)};
    for (const Mat& m : maps) o.push_back(normalized(m * o.back()));
    out.push_back(std::move(o));
  }
  return out;
}

struct SeparatedSet {
  std::vector<std::size_t> indices;
  std::vector<Vec> points;
};

inline SeparatedSet separated_set(const BilinearSystem& sys, const PiecewiseConstantControl& u,
                                  const std::vector<Vec>& candidates, int n, double delta, double step = 1.0) {
  const auto orbits = projective_orbits(sys, u, candidates, n, step);
  SeparatedSet s;
  s.indices = greedy_separated(orbits, n, delta, [](const Vec& a, const Vec& b) { return projective_distance(a, b); });
  for (std::size_t i : s.indices) s.points.push_back(candidates[i]);
  return s;
}

struct EntropyEstimate {
  double rate = 0.0;        // (log N(n) - log N(m)) / ((n - m) h)
  double naive_rate = 0.0;  // log N(n) / (n h)
  std::size_t count_n = 0;
  std::size_t count_m = 0;
  int n = 0;
  int m = 0;
};

template <class Metric>
EntropyEstimate orbit_entropy_estimate(const std::vector<Orbit>& orbits, int n, int m, double delta, Metric&& metric,
                                       double step = 1.0) {
  require(n > m && m >= 1, "entropy estimate needs n > m >= 1");
  EntropyEstimate e;
  e.n = n;
  e.m = m;
  e.count_n = greedy_separated(orbits, n, delta, metric).size();
  e.count_m = greedy_separated(orbits, m, delta, metric).size();
  if (e.count_n == 0) return e;
  e.rate = (std::log(static_cast<double>(e.count_n)) - std::log(static_cast<double>(e.count_m))) / ((n - m) * step);
  e.naive_rate = std::log(static_cast<double>(e.count_n)) / (n * step);
  return e;
}

// Separation growth inside a fiber, from its cell centers.
inline EntropyEstimate fiber_entropy_estimate(const BilinearSystem& sys, const ProjectiveGrid& grid,
                                              const PiecewiseConstantControl& u, const CellSet& fiber, int n,
                                              double delta, double step = 1.0) {
  require(n >= 2, "fiber entropy needs n >= 2");
  std::vector<Vec> pts;
  for (CellIndex c : fiber) pts.push_back(grid.center(c));
  if (pts.empty()) return EntropyEstimate{0.0, 0.0, 0, 0, n, n / 2};
  const auto orbits = projective_orbits(sys, u, pts, n, step);
  return orbit_entropy_estimate(orbits, n, n / 2, delta, [](const Vec& a, const Vec& b) { return projective_distance(a, b); },
                                step);
}

struct PressureOptions {
  double delta = 0.1;
  int plus_dimension = 1;
  EscapeOptions escape;  // epsilon and step of the survivor set; n_max is set per call
  ProjectiveOptions splitting;
};

struct PressureValue {
  int n = 0;
  double value = 0.0;  // log sum over E of exp(-log J+_n)
  std::size_t cardinality = 0;
  std::size_t candidates = 0;
  std::vector<double> log_unstable;
};

// w_n(u) over a maximal separated subset of the escape survivors.
inline PressureValue pressure_sum(const BilinearSystem& sys, const ProjectiveGrid& grid, const FiberProvider& fibers,
                                  const PiecewiseConstantControl& u, int n, const PressureOptions& opts) {
  EscapeOptions eo = opts.escape;
  eo.n_max = n;
  const auto trace = escape_rate_trace(sys, grid, fibers, u, eo);
  PressureValue pv;
  pv.n = n;
  if (trace.survivors.empty()) throw Error(ErrorCode::EmptySurvivorSet, "no survivors at n = " + std::to_string(n));
  std::vector<Vec> pts;
  for (const auto& leaf : trace.survivors)
    for (const Vec& y : grid.box_samples(leaf.cell, leaf.box, eo.samples_per_axis)) pts.push_back(y);
  pv.candidates = pts.size();
  // deepest survivors first, ranked by the orbit's largest distance to the
  // fiber up to and including time n
  auto orbits = projective_orbits(sys, u, pts, n + 1, eo.step, eo.max_step);
  std::vector<double> depth(pts.size(), 0.0);
  for (int j = 0; j <= n; ++j) {
    const CellSet f = fibers(j);
    for (std::size_t i = 0; i < pts.size(); ++i)
      depth[i] = std::max(depth[i], grid.distance_to_set(orbits[i][static_cast<std::size_t>(j)], f));
  }
  std::vector<std::size_t> order(pts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });
  std::vector<Orbit> sorted;
  for (std::size_t i : order) sorted.push_back(std::move(orbits[i]));
  const auto chosen =
      greedy_separated(sorted, n, opts.delta, [](const Vec& a, const Vec& b) { return projective_distance(a, b); });
  pv.cardinality = chosen.size();
  std::vector<Vec> points;
  for (std::size_t i : chosen) points.push_back(pts[order[i]]);
  double top = -std::numeric_limits<double>::infinity();
  for (const Vec& x : points) {
    const TangentFrame f = plus_frame(sys, ProjectivePoint(x), u, opts.plus_dimension, opts.splitting);
    const double lj = unstable_determinant(sys, f, u, n * eo.step, opts.splitting).log_value;
    pv.log_unstable.push_back(lj);
    top = std::max(top, -lj);
  }
  double s = 0.0;
  for (double lj : pv.log_unstable) s += std::exp(-lj - top);
  pv.value = top + std::log(s);
  return pv;
}

}  // namespace hinv
