#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "hinv/parallel.hpp"
#include "hinv/projective.hpp"

namespace hinv {

struct BowenOptions {
  double delta = 0.1;
  int n_max = 25;
  std::size_t samples = 100000;  // accepted samples per level
  double step = 1.0;
  double max_step = 0.5;
  std::uint64_t seed = 1;
  double margin = 0.25;
  std::size_t chunks = 16;  // RNG streams per level
  unsigned threads = 1;
};

struct BowenLevel {
  int n = 0;
  double log_volume = 0.0;
  double log_ci_low = 0.0;
  double log_ci_high = 0.0;
  std::size_t in_previous = 0;
  std::size_t in_current = 0;
  bool upper_only = false;  // no sample survived; log_volume is a rule-of-three upper bound

  double volume() const { return std::exp(log_volume); }
};

// Riemannian volume of the Bowen ball B_n = {y : d(phi(j h, x, u), phi(j h, y, u)) <= delta, 0 <= j < n}.
inline double bowen_ball_exact_unit(int d, double delta) {
  if (d == 1) return 2.0 * delta;
  if (d == 2) return 2.0 * std::numbers::pi * (1.0 - std::cos(delta));
  throw Error(ErrorCode::UnsupportedDimension, "Bowen volumes are available for d = 1 and d = 2");
}

namespace detail {

struct ChartBoxN {
  std::array<double, 2> lo{};
  std::array<double, 2> hi{};
};

inline double gnomonic_box_volume(int d, const ChartBoxN& b) {
  if (d == 1) return std::atan(b.hi[0]) - std::atan(b.lo[0]);
  auto f = [](double a, double c) { return std::atan(a * c / std::sqrt(1.0 + a * a + c * c)); };
  return f(b.hi[0], b.hi[1]) - f(b.lo[0], b.hi[1]) - f(b.hi[0], b.lo[1]) + f(b.lo[0], b.lo[1]);
}

inline double gnomonic_density(int d, const std::array<double, 2>& s) {
  double r2 = 0.0;
  for (int i = 0; i < d; ++i) r2 += s[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i)];
  return std::pow(1.0 + r2, -0.5 * (d + 1));
}

struct ChunkTally {
  std::size_t in_previous = 0;
  std::size_t in_current = 0;
  ChartBoxN current_extent;
  bool any = false;
};

}  // namespace detail

// Nested multilevel Monte Carlo: vol(B_n) = vol(B_{n-1}) * P(B_n | B_{n-1}),
// where each level samples uniformly (Riemannian measure, gnomonic chart at x)
// from a box grown from the survivors of the previous level.
inline std::vector<BowenLevel> bowen_ball_volumes(const BilinearSystem& sys, const ProjectivePoint& x,
                                                  const PiecewiseConstantControl& u, const BowenOptions& opts) {
  const int d = sys.projective_dimension();
  if (d != 1 && d != 2) throw Error(ErrorCode::UnsupportedDimension, "Bowen volumes are available for d = 1 and d = 2");
  require(opts.delta > 0.0 && opts.delta < std::numbers::pi / 2, "delta must lie in (0, pi/2)");
  require(opts.samples >= opts.chunks && opts.chunks >= 1 && opts.n_max >= 1, "invalid Bowen sampling parameters");
  const Vec& base = x.representative();
  const Mat chart = tangent_basis(base);
  std::vector<Mat> maps;
  std::vector<Vec> orbit{base};
  for (int j = 0; j + 1 < opts.n_max; ++j) {
    maps.push_back(transfer_matrix(sys, u, j * opts.step, (j + 1) * opts.step, opts.max_step));
    orbit.push_back(normalized(maps.back() * orbit.back()));
  }
  const double chord = 2.0 * std::sin(0.5 * opts.delta);

  // Largest j + 1 (capped at `limit`) with all times < j + 1 inside the ball.
  auto survival = [&](const Vec& y0, int limit) {
    Vec y = y0;
    for (int j = 0; j < limit; ++j) {
      if (j > 0) y = normalized(maps[static_cast<std::size_t>(j - 1)] * y);
      const Vec& o = orbit[static_cast<std::size_t>(j)];
      if ((y - o).norm() > chord && (y + o).norm() > chord) return j;
    }
    return limit;
  };

  const double t = std::tan(opts.delta);
  detail::ChartBoxN box;
  for (int i = 0; i < d; ++i) {
    box.lo[static_cast<std::size_t>(i)] = -t;
    box.hi[static_cast<std::size_t>(i)] = t;
  }
  std::vector<BowenLevel> out;
  double log_vol = std::log(detail::gnomonic_box_volume(d, box));
  double log_var = 0.0;
  const std::size_t per_chunk = opts.samples / opts.chunks;
  for (int n = 1; n <= opts.n_max; ++n) {
    std::array<double, 2> nearest{};
    for (int i = 0; i < d; ++i) {
      const auto k = static_cast<std::size_t>(i);
      nearest[k] = std::clamp(0.0, box.lo[k], box.hi[k]);
    }
    const double rho_max = detail::gnomonic_density(d, nearest);
    std::vector<detail::ChunkTally> tallies(opts.chunks);
    parallel_for(opts.chunks, opts.threads, [&](std::size_t c) {
      std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                        static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(c)};
      std::mt19937_64 rng(seq);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      auto& tally = tallies[c];
      std::size_t accepted = 0;
      while (accepted < per_chunk) {
        std::array<double, 2> s{};
        for (int i = 0; i < d; ++i) {
          const auto k = static_cast<std::size_t>(i);
          s[k] = box.lo[k] + unit(rng) * (box.hi[k] - box.lo[k]);
        }
        if (unit(rng) * rho_max > detail::gnomonic_density(d, s)) continue;
        ++accepted;
        Vec y = base;
        for (int i = 0; i < d; ++i) y += s[static_cast<std::size_t>(i)] * chart.col(i);
        y.normalize();
        const int alive = survival(y, n);
        if (alive >= n - 1) ++tally.in_previous;
        if (alive >= n) {
          ++tally.in_current;
          for (int i = 0; i < d; ++i) {
            const auto k = static_cast<std::size_t>(i);
            if (!tally.any) {
              tally.current_extent.lo[k] = tally.current_extent.hi[k] = s[k];
            } else {
              tally.current_extent.lo[k] = std::min(tally.current_extent.lo[k], s[k]);
              tally.current_extent.hi[k] = std::max(tally.current_extent.hi[k], s[k]);
            }
          }
          tally.any = true;
        }
      }
    });
    BowenLevel level;
    level.n = n;
    detail::ChartBoxN extent;
    bool any = false;
    for (const auto& tl : tallies) {
      level.in_previous += tl.in_previous;
      level.in_current += tl.in_current;
      if (!tl.any) continue;
      for (int i = 0; i < d; ++i) {
        const auto k = static_cast<std::size_t>(i);
        extent.lo[k] = any ? std::min(extent.lo[k], tl.current_extent.lo[k]) : tl.current_extent.lo[k];
        extent.hi[k] = any ? std::max(extent.hi[k], tl.current_extent.hi[k]) : tl.current_extent.hi[k];
      }
      any = true;
    }
    if (level.in_current == 0 || level.in_previous == 0) {
      level.upper_only = true;
      level.log_volume = log_vol + std::log(3.0 / static_cast<double>(std::max<std::size_t>(level.in_previous, 1)));
      level.log_ci_low = -std::numeric_limits<double>::infinity();
      level.log_ci_high = level.log_volume;
      out.push_back(level);
      break;
    }
    const double pc = static_cast<double>(level.in_current);
    const double pp = static_cast<double>(level.in_previous);
    log_vol += std::log(pc / pp);
    log_var += 1.0 / pc - 1.0 / pp;
    level.log_volume = log_vol;
    level.log_ci_low = log_vol - 1.96 * std::sqrt(log_var);
    level.log_ci_high = log_vol + 1.96 * std::sqrt(log_var);
    out.push_back(level);
    // next sampling box: survivor extent with a relative margin, inside the current box
    for (int i = 0; i < d; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double w = extent.hi[k] - extent.lo[k];
      const double pad = opts.margin * w + 1e-300;
      box.lo[k] = std::max(box.lo[k], extent.lo[k] - pad);
      box.hi[k] = std::min(box.hi[k], extent.hi[k] + pad);
    }
  }
  return out;
}

inline BowenLevel bowen_ball_volume(const BilinearSystem& sys, const ProjectivePoint& x, const PiecewiseConstantControl& u,
                                    int n, BowenOptions opts) {
  opts.n_max = n;
  auto levels = bowen_ball_volumes(sys, x, u, opts);
  return levels.back();
}

// log J+ over horizons n h, n = 1..n_max, with the unstable frame at x.
inline std::vector<double> log_unstable_series(const BilinearSystem& sys, const TangentFrame& frame,
                                               const PiecewiseConstantControl& u, int n_max, double step,
                                               const ProjectiveOptions& opts = {}) {
  std::vector<double> out;
  TangentFrame f = frame;
  double total = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    const auto piece = unstable_determinant(sys, f, u.shifted((n - 1) * step), step, opts);
    total += piece.log_value;
    out.push_back(total);
    f = piece.transported;
  }
  return out;
}

}  // namespace hinv
