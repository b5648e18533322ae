#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hinv/error.hpp"

namespace hinv {

enum class CocycleKind { Additive, Subadditive, General };

// Values v_1..v_N of a cocycle at a fixed (x, u), with provenance labels.
struct CocycleTrace {
  std::string cocycle;
  std::string point;
  std::string control;
  CocycleKind kind = CocycleKind::General;
  std::vector<int> horizons;
  std::vector<double> values;

  void push(int n, double v) {
    horizons.push_back(n);
    values.push_back(v);
  }

  std::vector<double> rates() const {
    std::vector<double> r;
    for (std::size_t i = 0; i < values.size(); ++i) r.push_back(values[i] / horizons[i]);
    return r;
  }
};

// v(k, j): value over a horizon k starting from the j-fold shifted state.
using ShiftedCocycle = std::function<double(int k, int shift)>;

// sup |v(k, j)| / k over 0 < k and 0 <= j with j + k <= n.
inline double cocycle_omega(const ShiftedCocycle& v, int n) {
  double w = 0.0;
  for (int j = 0; j < n; ++j)
    for (int k = 1; j + k <= n; ++k) w = std::max(w, std::abs(v(k, j)) / k);
  return w;
}

namespace detail {

inline bool restart_ok(const ShiftedCocycle& v, int n, int n1, double eps, double omega) {
  const double sigma = v(n, 0) / n;
  for (int k = 1; k <= n - n1; ++k)
    if (!(v(k, n1) / k > sigma - eps)) return false;
  return omega <= 0.0 || (n - n1) >= eps * n / (2.0 * omega);
}

}  // namespace detail

// Restart time n1 in [0, n) after which every partial average of the shifted
// cocycle stays above v_n/n - eps, and the remaining horizon is at least
// eps n / (2 omega).
inline int subadditive_restart(const ShiftedCocycle& v, int n, double eps, double omega) {
  require(n >= 1 && eps > 0.0, "restart needs n >= 1 and eps > 0");
  const double sigma = v(n, 0) / n;
  double gamma = v(1, 0);
  for (int k = 1; k <= n; ++k) gamma = std::min(gamma, v(k, 0) / k);
  int n1 = 0;
  if (gamma < sigma - eps) {
    for (int k = 1; k < n; ++k)
      if (v(k, 0) / k <= sigma - eps) n1 = k;
  }
  if (detail::restart_ok(v, n, n1, eps, omega)) return n1;
  for (int k = 0; k < n; ++k)
    if (detail::restart_ok(v, n, k, eps, omega)) return k;
  return n1;
}

// Pairs (i, j), 0 <= i < m and 0 <= j < q_i with n = i + q_i m + r_i; the
// starting points i + j m enumerate {0, ..., n - m} once each.
inline std::vector<std::pair<int, int>> partition_indices(int n, int m) {
  require(m >= 1 && n >= m, "partition needs 1 <= m <= n");
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < m; ++i) {
    const int q = (n - i) / m;
    for (int j = 0; j < q; ++j) out.emplace_back(i, j);
  }
  return out;
}

}  // namespace hinv
