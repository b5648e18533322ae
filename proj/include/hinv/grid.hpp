#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "hinv/error.hpp"
#include "hinv/linalg.hpp"

namespace hinv {

using CellIndex = std::int32_t;

// Sorted set of cell indices.
class CellSet {
 public:
  CellSet() = default;
  explicit CellSet(std::vector<CellIndex> cells) : cells_(std::move(cells)) {
    std::sort(cells_.begin(), cells_.end());
    cells_.erase(std::unique(cells_.begin(), cells_.end()), cells_.end());
  }

  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  bool contains(CellIndex c) const { return std::binary_search(cells_.begin(), cells_.end(), c); }
  const std::vector<CellIndex>& cells() const { return cells_; }
  auto begin() const { return cells_.begin(); }
  auto end() const { return cells_.end(); }
  CellIndex front() const { return cells_.front(); }

  CellSet unite(const CellSet& o) const {
    std::vector<CellIndex> r;
    std::set_union(begin(), end(), o.begin(), o.end(), std::back_inserter(r));
    return from_sorted(std::move(r));
  }
  CellSet intersect(const CellSet& o) const {
    std::vector<CellIndex> r;
    std::set_intersection(begin(), end(), o.begin(), o.end(), std::back_inserter(r));
    return from_sorted(std::move(r));
  }
  CellSet subtract(const CellSet& o) const {
    std::vector<CellIndex> r;
    std::set_difference(begin(), end(), o.begin(), o.end(), std::back_inserter(r));
    return from_sorted(std::move(r));
  }
  bool subset_of(const CellSet& o) const { return std::includes(o.begin(), o.end(), begin(), end()); }

  friend bool operator==(const CellSet&, const CellSet&) = default;

 private:
  static CellSet from_sorted(std::vector<CellIndex> v) {
    CellSet s;
    s.cells_ = std::move(v);
    return s;
  }
  std::vector<CellIndex> cells_;
};

// Rectangle in the chart of a cell. On RP^1 the chart is the gnomonic offset s
// along the tangent at the cell center; on RP^2 it is the pair of cube-face
// coordinates (a, b).
struct ChartBox {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{0.0, 0.0};
};

// Uniform grid on RP^1 (angles) or RP^2 (cube map on three faces).
class ProjectiveGrid {
 public:
  static ProjectiveGrid build(int d, int resolution) {
    if (d != 1 && d != 2) throw Error(ErrorCode::UnsupportedDimension, "grids exist only for d = 1 and d = 2");
    require(resolution >= 4, "grid resolution must be at least 4");
    ProjectiveGrid g;
    g.d_ = d;
    g.n_ = resolution;
    const std::size_t count = d == 1 ? static_cast<std::size_t>(resolution)
                                     : 3u * static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution);
    g.centers_.reserve(count);
    g.volumes_.reserve(count);
    g.radii_.reserve(count);
    for (std::size_t c = 0; c < count; ++c) {
      const auto cell = static_cast<CellIndex>(c);
      g.centers_.push_back(g.compute_center(cell));
      const ChartBox b = g.box(cell);
      g.volumes_.push_back(g.chart_volume(cell, b));
      g.radii_.push_back(g.compute_radius(cell, b));
    }
    return g;
  }

  int dimension() const { return d_; }
  int resolution() const { return n_; }
  std::size_t size() const { return centers_.size(); }
  const Vec& center(CellIndex c) const { return centers_[static_cast<std::size_t>(c)]; }
  double volume(CellIndex c) const { return volumes_[static_cast<std::size_t>(c)]; }
  double radius(CellIndex c) const { return radii_[static_cast<std::size_t>(c)]; }
  double max_radius() const { return *std::max_element(radii_.begin(), radii_.end()); }
  double total_volume() const {
    double s = 0.0;
    for (double v : volumes_) s += v;
    return s;
  }

  CellSet all() const {
    std::vector<CellIndex> v(size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<CellIndex>(i);
    return CellSet(std::move(v));
  }

  // Cell containing x; boundary points go to the lower index.
  CellIndex lookup(const Vec& x) const {
    require(x.size() == d_ + 1, "point has the wrong dimension for this grid");
    if (d_ == 1) {
      double angle = std::atan2(x[1], x[0]);
      if (angle < 0.0) angle += std::numbers::pi;
      if (angle >= std::numbers::pi) angle -= std::numbers::pi;
      const double a = angle * n_ / std::numbers::pi;
      auto k = static_cast<long>(std::ceil(a - 0.5));
      if (k >= n_) k -= n_;
      if (k < 0) k = 0;
      return static_cast<CellIndex>(k);
    }
    int f = 0;
    for (int i = 1; i < 3; ++i)
      if (std::abs(x[i]) > std::abs(x[f])) f = i;
    const double lead = x[f];
    if (lead == 0.0 || !std::isfinite(lead)) throw Error(ErrorCode::NonFiniteState, "cannot locate a zero vector");
    const double a = x[(f + 1) % 3] / lead;
    const double b = x[(f + 2) % 3] / lead;
    return static_cast<CellIndex>((f * n_ + face_index(a)) * n_ + face_index(b));
  }

  ChartBox box(CellIndex c) const {
    ChartBox b;
    if (d_ == 1) {
      const double half = std::tan(0.5 * std::numbers::pi / n_);
      b.lo = {-half, 0.0};
      b.hi = {half, 0.0};
      return b;
    }
    const int i = (c / n_) % n_;
    const int j = c % n_;
    b.lo = {face_coord(2 * i - n_), face_coord(2 * j - n_)};
    b.hi = {face_coord(2 * i + 2 - n_), face_coord(2 * j + 2 - n_)};
    return b;
  }

  // Unit representative of the chart point (s1, s2) of cell c.
  Vec chart_point(CellIndex c, double s1, double s2) const {
    if (d_ == 1) {
      const Vec& ctr = center(c);
      Vec v(2);
      v[0] = ctr[0] - s1 * ctr[1];
      v[1] = ctr[1] + s1 * ctr[0];
      return v / v.norm();
    }
    const int f = c / (n_ * n_);
    Vec v(3);
    v[f] = 1.0;
    v[(f + 1) % 3] = s1;
    v[(f + 2) % 3] = s2;
    return v / v.norm();
  }

  // Riemannian volume of a chart rectangle.
  double chart_volume(CellIndex, const ChartBox& b) const {
    if (d_ == 1) return std::atan(b.hi[0]) - std::atan(b.lo[0]);
    return face_area_primitive(b.hi[0], b.hi[1]) - face_area_primitive(b.lo[0], b.hi[1]) -
           face_area_primitive(b.hi[0], b.lo[1]) + face_area_primitive(b.lo[0], b.lo[1]);
  }

  // per_axis^d points at the centers of a per_axis subdivision of the box.
  std::vector<Vec> box_samples(CellIndex c, const ChartBox& b, int per_axis = 3) const {
    std::vector<Vec> out;
    auto at = [&](int axis, int k) {
      const double f = (k + 0.5) / per_axis;
      return b.lo[static_cast<std::size_t>(axis)] +
             f * (b.hi[static_cast<std::size_t>(axis)] - b.lo[static_cast<std::size_t>(axis)]);
    };
    if (d_ == 1) {
      for (int k = 0; k < per_axis; ++k) out.push_back(chart_point(c, at(0, k), 0.0));
    } else {
      for (int k = 0; k < per_axis; ++k)
        for (int l = 0; l < per_axis; ++l) out.push_back(chart_point(c, at(0, k), at(1, l)));
    }
    return out;
  }

  std::vector<Vec> sample_points(CellIndex c, int per_axis = 3) const { return box_samples(c, box(c), per_axis); }

  // Cells whose centers lie within eps of some center of q.
  CellSet fatten(const CellSet& q, double eps) const {
    const double chord = 2.0 * std::sin(0.5 * std::min(eps, std::numbers::pi / 2)) + 1e-12;
    std::vector<CellIndex> out;
    for (std::size_t c = 0; c < size(); ++c) {
      const Vec& x = centers_[c];
      if (q.contains(static_cast<CellIndex>(c))) {
        out.push_back(static_cast<CellIndex>(c));
        continue;
      }
      for (CellIndex k : q) {
        const Vec& y = center(k);
        if ((x - y).norm() <= chord || (x + y).norm() <= chord) {
          out.push_back(static_cast<CellIndex>(c));
          break;
        }
      }
    }
    return CellSet(std::move(out));
  }

  double distance_to_set(const Vec& x, const CellSet& s) const {
    double best = std::numeric_limits<double>::infinity();
    for (CellIndex k : s) best = std::min(best, projective_distance(x, center(k)));
    return best;
  }

  // Hausdorff distance between the center sets.
  double hausdorff(const CellSet& a, const CellSet& b) const {
    if (a.empty() && b.empty()) return 0.0;
    if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
    double h = 0.0;
    for (CellIndex k : a) h = std::max(h, distance_to_set(center(k), b));
    for (CellIndex k : b) h = std::max(h, distance_to_set(center(k), a));
    return h;
  }

 private:
  static double face_area_primitive(double a, double b) { return std::atan(a * b / std::sqrt(1.0 + a * a + b * b)); }

  // Face coordinate k / n for integer k in [-n, n].
  double face_coord(int k) const { return static_cast<double>(k) / n_; }

  int face_index(double a) const {
    auto i = static_cast<long>(std::ceil((a + 1.0) * n_ / 2.0)) - 1;
    return static_cast<int>(std::clamp<long>(i, 0, n_ - 1));
  }

  Vec compute_center(CellIndex c) const {
    Vec v(d_ + 1);
    if (d_ == 1) {
      // exact on the coordinate axes
      if (c == 0) {
        v << 1.0, 0.0;
      } else if (2 * c == n_) {
        v << 0.0, 1.0;
      } else {
        const double angle = c * std::numbers::pi / n_;
        v << std::cos(angle), std::sin(angle);
      }
      return v;
    }
    const int i = (c / n_) % n_;
    const int j = c % n_;
    return chart_point(c, face_coord(2 * i + 1 - n_), face_coord(2 * j + 1 - n_));
  }

  double compute_radius(CellIndex c, const ChartBox& b) const {
    const Vec& ctr = center(c);
    if (d_ == 1) return projective_distance(ctr, chart_point(c, b.hi[0], 0.0));
    double r = 0.0;
    for (double s1 : {b.lo[0], b.hi[0]})
      for (double s2 : {b.lo[1], b.hi[1]}) r = std::max(r, projective_distance(ctr, chart_point(c, s1, s2)));
    return r;
  }

  int d_ = 1;
  int n_ = 2;
  std::vector<Vec> centers_;
  std::vector<double> volumes_;
  std::vector<double> radii_;
};

}  // namespace hinv
