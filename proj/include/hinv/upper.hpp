#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "hinv/fibers.hpp"
#include "hinv/grid.hpp"
#include "hinv/parallel.hpp"
#include "hinv/projective.hpp"

namespace hinv {

// Piecewise-constant controls switching every `switch_step` on [0, horizon]
// between lattice values: constant controls first, then the remaining
// switching patterns in lexicographic order, truncated at `budget`.
inline std::vector<PiecewiseConstantControl> control_family(const ControlRange& range, int values_per_axis,
                                                            double switch_step, double horizon, std::size_t budget) {
  require(switch_step > 0.0 && horizon > 0.0 && budget >= 1, "invalid control family parameters");
  const auto values = range.lattice(values_per_axis);
  const int pieces = std::max(1, static_cast<int>(std::ceil(horizon / switch_step - 1e-9)));
  std::vector<PiecewiseConstantControl> out;
  for (const auto& v : values) {
    if (out.size() >= budget) return out;
    out.push_back(PiecewiseConstantControl::constant(v));
  }
  if (pieces == 1) return out;
  std::vector<double> bps;
  for (int k = 1; k < pieces; ++k) bps.push_back(k * switch_step);
  std::vector<std::size_t> digits(static_cast<std::size_t>(pieces), 0);
  while (out.size() < budget) {
    std::size_t k = digits.size();
    while (k > 0) {
      --k;
      if (++digits[k] < values.size()) break;
      digits[k] = 0;
      if (k == 0) return out;
    }
    const bool constant = std::all_of(digits.begin(), digits.end(), [&](std::size_t x) { return x == digits.front(); });
    if (constant) continue;
    std::vector<Vec> vals;
    for (std::size_t dgt : digits) vals.push_back(values[dgt]);
    out.emplace_back(bps, vals);
  }
  return out;
}

struct UpperOptions {
  double horizon = 4.0;       // tau
  double step = 1.0;          // sampling step h of the kept test
  double neighborhood = 0.0;  // 0: one cell diameter around Q
  int samples_per_axis = 3;
  double max_step = 0.5;
  std::size_t exact_limit = 24;  // exact minimum cover when at most this many distinct kept sets remain
  unsigned threads = 1;
};

struct UpperEstimate {
  bool coverable = false;
  double value = std::numeric_limits<double>::infinity();  // log(cover size) / tau
  std::size_t cover_size = 0;
  std::vector<std::size_t> cover;  // control indices
  bool exact = false;
  std::optional<CellIndex> witness;  // a K-cell kept by no control
  std::size_t family_size = 0;
};

namespace detail {

using Bits = std::vector<std::uint64_t>;

inline bool test_bit(const Bits& b, std::size_t i) { return (b[i / 64] >> (i % 64)) & 1u; }

inline std::size_t count_new(const Bits& set, const Bits& covered) {
  std::size_t c = 0;
  for (std::size_t w = 0; w < set.size(); ++w) c += static_cast<std::size_t>(std::popcount(set[w] & ~covered[w]));
  return c;
}

inline bool cover_search(const std::vector<Bits>& sets, Bits covered, std::size_t universe, int budget,
                         std::vector<std::size_t>& pick) {
  std::size_t first = universe;
  for (std::size_t i = 0; i < universe; ++i)
    if (!test_bit(covered, i)) {
      first = i;
      break;
    }
  if (first == universe) return true;
  if (budget == 0) return false;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    if (!test_bit(sets[s], first)) continue;
    Bits next = covered;
    for (std::size_t w = 0; w < next.size(); ++w) next[w] |= sets[s][w];
    pick.push_back(s);
    if (cover_search(sets, next, universe, budget - 1, pick)) return true;
    pick.pop_back();
  }
  return false;
}

}  // namespace detail

// Spanning-set count for keeping every sample point of every K-cell in N(Q)
// on [0, tau], reduced to a set cover over the control family.
inline UpperEstimate try_invariance_entropy_upper(const BilinearSystem& sys, const ProjectiveGrid& grid, const CellSet& k,
                                                  const CellSet& q, const std::vector<PiecewiseConstantControl>& family,
                                                  const UpperOptions& opts = {}) {
  require(!k.empty() && !family.empty(), "upper estimate needs a nonempty K and control family");
  require(opts.horizon > 0.0 && opts.step > 0.0, "upper estimate needs tau > 0 and h > 0");
  const double radius = opts.neighborhood > 0.0 ? opts.neighborhood : 2.0 * grid.max_radius();
  const CellSet hood = grid.fatten(q, radius);
  require(k.subset_of(hood), "K must lie inside the neighborhood of Q");
  const auto inside = detail::indicator(grid, hood);
  const std::size_t universe = k.size();
  const std::size_t words = (universe + 63) / 64;
  const int steps = static_cast<int>(opts.horizon / opts.step + 1e-9);
  std::vector<std::vector<Vec>> samples;
  for (CellIndex c : k) samples.push_back(grid.sample_points(c, opts.samples_per_axis));

  std::vector<detail::Bits> kept(family.size(), detail::Bits(words, 0));
  parallel_for(family.size(), opts.threads, [&](std::size_t f) {
    std::vector<Mat> maps;
    for (int j = 0; j < steps; ++j)
      maps.push_back(transfer_matrix(sys, family[f], j * opts.step, (j + 1) * opts.step, opts.max_step));
    for (std::size_t i = 0; i < universe; ++i) {
      bool ok = true;
      for (const Vec& x0 : samples[i]) {
        Vec y = x0;
        for (const Mat& m : maps) {
          y = normalized(m * y);
          if (!inside[static_cast<std::size_t>(grid.lookup(y))]) {
            ok = false;
            break;
          }
        }
        if (!ok) break;
      }
      if (ok) kept[f][i / 64] |= std::uint64_t{1} << (i % 64);
    }
  });

  UpperEstimate est;
  est.family_size = family.size();
  detail::Bits all(words, 0);
  for (const auto& s : kept)
    for (std::size_t w = 0; w < words; ++w) all[w] |= s[w];
  for (std::size_t i = 0; i < universe; ++i)
    if (!detail::test_bit(all, i)) {
      est.witness = k.cells()[i];
      return est;
    }

  // distinct, non-dominated kept sets; the lowest control index represents each
  std::vector<std::size_t> reps;
  for (std::size_t f = 0; f < family.size(); ++f) {
    bool dominated = false;
    for (std::size_t g = 0; g < family.size() && !dominated; ++g) {
      if (g == f) continue;
      bool subset = true, equal = true;
      for (std::size_t w = 0; w < words; ++w) {
        if ((kept[f][w] & ~kept[g][w]) != 0) subset = false;
        if (kept[f][w] != kept[g][w]) equal = false;
      }
      dominated = subset && (!equal || g < f);
    }
    if (!dominated) reps.push_back(f);
  }

  // greedy cover, ties to the lowest control index
  std::vector<std::size_t> greedy;
  detail::Bits covered(words, 0);
  while (detail::count_new(all, covered) > 0) {
    std::size_t best = reps.front(), gain = 0;
    for (std::size_t f : reps) {
      const std::size_t g = detail::count_new(kept[f], covered);
      if (g > gain) {
        gain = g;
        best = f;
      }
    }
    greedy.push_back(best);
    for (std::size_t w = 0; w < words; ++w) covered[w] |= kept[best][w];
  }
  est.cover = greedy;
  if (reps.size() <= opts.exact_limit) {
    std::vector<detail::Bits> sets;
    for (std::size_t f : reps) sets.push_back(kept[f]);
    for (int b = 1; b < static_cast<int>(greedy.size()); ++b) {
      std::vector<std::size_t> pick;
      if (detail::cover_search(sets, detail::Bits(words, 0), universe, b, pick)) {
        est.cover.clear();
        for (std::size_t s : pick) est.cover.push_back(reps[s]);
        std::sort(est.cover.begin(), est.cover.end());
        break;
      }
    }
    est.exact = true;
  }
  est.coverable = true;
  est.cover_size = est.cover.size();
  est.value = std::log(static_cast<double>(est.cover_size)) / opts.horizon;
  return est;
}

inline UpperEstimate invariance_entropy_upper(const BilinearSystem& sys, const ProjectiveGrid& grid, const CellSet& k,
                                              const CellSet& q, const std::vector<PiecewiseConstantControl>& family,
                                              const UpperOptions& opts = {}) {
  auto est = try_invariance_entropy_upper(sys, grid, k, q, family, opts);
  if (!est.coverable)
    throw Error(ErrorCode::Uncoverable, "cell " + std::to_string(*est.witness) + " is kept by no control of the family");
  return est;
}

}  // namespace hinv
