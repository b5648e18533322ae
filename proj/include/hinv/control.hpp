#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hinv/error.hpp"
#include "hinv/linalg.hpp"

namespace hinv {

// Compact box of admissible control values.
class ControlRange {
 public:
  ControlRange() = default;

  ControlRange(std::vector<double> lo, std::vector<double> hi, bool allow_single_point = false)
      : lo_(std::move(lo)), hi_(std::move(hi)) {
    require(!lo_.empty() && lo_.size() == hi_.size(), "control range bounds must be nonempty and of equal length");
    bool has_extent = false;
    for (std::size_t i = 0; i < lo_.size(); ++i) {
      require(std::isfinite(lo_[i]) && std::isfinite(hi_[i]), "control range bounds must be finite");
      require(lo_[i] <= hi_[i], "control range needs lo <= hi on every axis");
      if (lo_[i] < hi_[i]) has_extent = true;
    }
    require(has_extent || allow_single_point, "control range collapses to a single point");
  }

  int dimension() const { return static_cast<int>(lo_.size()); }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }

  bool contains(const Vec& v, double tol = 0.0) const {
    if (v.size() != dimension()) return false;
    for (int i = 0; i < dimension(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (!(v[i] >= lo_[k] - tol && v[i] <= hi_[k] + tol)) return false;
    }
    return true;
  }

  double max_abs() const {
    double r = 0.0;
    for (std::size_t i = 0; i < lo_.size(); ++i) r = std::max({r, std::abs(lo_[i]), std::abs(hi_[i])});
    return r;
  }

  // Tensor lattice with `per_axis` evenly spaced values on each nondegenerate
  // axis, ordered with the first axis varying slowest.
  std::vector<Vec> lattice(int per_axis) const {
    require(per_axis >= 1, "lattice needs at least one value per axis");
    std::vector<std::vector<double>> axes;
    for (std::size_t i = 0; i < lo_.size(); ++i) {
      std::vector<double> vals;
      if (lo_[i] == hi_[i] || per_axis == 1) {
        vals.push_back(per_axis == 1 ? 0.5 * (lo_[i] + hi_[i]) : lo_[i]);
      } else {
        for (int j = 0; j < per_axis; ++j) {
          const double f = static_cast<double>(j) / (per_axis - 1);
          vals.push_back(j == per_axis - 1 ? hi_[i] : lo_[i] + f * (hi_[i] - lo_[i]));
        }
      }
      axes.push_back(std::move(vals));
    }
    std::vector<Vec> out;
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
      Vec v(dimension());
      for (std::size_t i = 0; i < axes.size(); ++i) v[static_cast<int>(i)] = axes[i][idx[i]];
      out.push_back(v);
      std::size_t k = axes.size();
      while (k > 0) {
        --k;
        if (++idx[k] < axes[k].size()) break;
        idx[k] = 0;
        if (k == 0) return out;
      }
    }
  }

 private:
  std::vector<double> lo_;
  std::vector<double> hi_;
};

// Two-sided piecewise-constant control. values[0] holds on (-inf, t_0),
// values[j] on [t_{j-1}, t_j), values.back() on [t_last, +inf).
class PiecewiseConstantControl {
 public:
  struct Piece {
    double from;
    double to;
    const Vec* value;
  };

  PiecewiseConstantControl() = default;

  PiecewiseConstantControl(std::vector<double> breakpoints, std::vector<Vec> values)
      : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
    require(values_.size() == breakpoints_.size() + 1, "piecewise-constant control needs one more value than breakpoints");
    for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
      require(std::isfinite(breakpoints_[i]), "control breakpoints must be finite");
      if (i > 0) require(breakpoints_[i - 1] < breakpoints_[i], "control breakpoints must be strictly increasing");
    }
    for (const auto& v : values_) {
      require(v.size() == values_.front().size(), "control values must share one dimension");
      require(v.allFinite(), "control values must be finite");
    }
    normalize();
  }

  PiecewiseConstantControl(std::vector<double> breakpoints, std::vector<Vec> values, const ControlRange& range)
      : PiecewiseConstantControl(std::move(breakpoints), std::move(values)) {
    for (const auto& v : values_) require(range.contains(v), "control value outside the control range");
  }

  static PiecewiseConstantControl constant(const Vec& value) { return PiecewiseConstantControl({}, {value}); }

  static PiecewiseConstantControl constant(double value) {
    Vec v(1);
    v[0] = value;
    return constant(v);
  }

  int dimension() const { return values_.empty() ? 0 : static_cast<int>(values_.front().size()); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<Vec>& values() const { return values_; }
  bool is_constant() const { return breakpoints_.empty(); }

  const Vec& operator()(double t) const {
    const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
    return values_[static_cast<std::size_t>(it - breakpoints_.begin())];
  }

  // (theta_s u)(t) = u(t + s)
  PiecewiseConstantControl shifted(double s) const {
    PiecewiseConstantControl out = *this;
    for (double& b : out.breakpoints_) b -= s;
    return out;
  }

  // Pieces covering the interval between t0 and t1, listed in the direction of
  // travel from t0 to t1.
  std::vector<Piece> pieces(double t0, double t1) const {
    std::vector<Piece> out;
    if (t0 == t1) return out;
    const double lo = std::min(t0, t1);
    const double hi = std::max(t0, t1);
    std::vector<double> cuts{lo};
    for (double b : breakpoints_)
      if (b > lo && b < hi) cuts.push_back(b);
    cuts.push_back(hi);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) out.push_back({cuts[i], cuts[i + 1], &(*this)(cuts[i])});
    if (t1 < t0) {
      std::reverse(out.begin(), out.end());
      for (auto& p : out) std::swap(p.from, p.to);
    }
    return out;
  }

  bool in_range(const ControlRange& range) const {
    return std::all_of(values_.begin(), values_.end(), [&](const Vec& v) { return range.contains(v); });
  }

  friend bool operator==(const PiecewiseConstantControl& a, const PiecewiseConstantControl& b) {
    if (a.breakpoints_ != b.breakpoints_ || a.values_.size() != b.values_.size()) return false;
    for (std::size_t i = 0; i < a.values_.size(); ++i)
      if (a.values_[i].size() != b.values_[i].size() || a.values_[i] != b.values_[i]) return false;
    return true;
  }

  std::string describe() const {
    std::string s;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (i > 0) s += " |" + std::to_string(breakpoints_[i - 1]) + "| ";
      for (int k = 0; k < values_[i].size(); ++k) s += (k ? "," : "") + std::to_string(values_[i][k]);
    }
    return s;
  }

 private:
  void normalize() {
    std::vector<double> b;
    std::vector<Vec> v{values_.front()};
    for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
      if (values_[i + 1] == v.back()) continue;
      b.push_back(breakpoints_[i]);
      v.push_back(values_[i + 1]);
    }
    breakpoints_ = std::move(b);
    values_ = std::move(v);
  }

  std::vector<double> breakpoints_;
  std::vector<Vec> values_;
};

}  // namespace hinv
