#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hinv/control.hpp"
#include "hinv/error.hpp"
#include "hinv/linalg.hpp"
#include "hinv/system.hpp"

namespace hinv {

// x' = (A0 + sum_i u_i A_i) x on R^{d+1}, viewed through its action on RP^d.
class BilinearSystem {
 public:
  BilinearSystem(std::vector<Mat> matrices, ControlRange range)
      : matrices_(std::move(matrices)), range_(std::move(range)) {
    if (matrices_.empty()) throw Error(ErrorCode::InvalidArgument, "A0 is missing");
    const auto n = matrices_.front().rows();
    for (std::size_t i = 0; i < matrices_.size(); ++i) {
      const std::string name = "A" + std::to_string(i);
      const Mat& a = matrices_[i];
      if (a.rows() != a.cols()) throw Error(ErrorCode::InvalidArgument, name + " is not square");
      if (a.rows() != n) throw Error(ErrorCode::InvalidArgument, name + " differs in size from A0");
      if (!a.allFinite()) throw Error(ErrorCode::InvalidArgument, name + " has non-finite entries");
    }
    if (n < 2 || n > kMaxAmbient)
      throw Error(ErrorCode::UnsupportedDimension, "ambient dimension must lie in [2, " + std::to_string(kMaxAmbient) + "]");
    if (static_cast<int>(matrices_.size()) != range_.dimension() + 1)
      throw Error(ErrorCode::InvalidArgument, "number of control matrices A1..Am does not match the control range dimension");
  }

  int ambient_dimension() const { return static_cast<int>(matrices_.front().rows()); }
  int projective_dimension() const { return ambient_dimension() - 1; }
  int control_dimension() const { return range_.dimension(); }
  const std::vector<Mat>& matrices() const { return matrices_; }
  const ControlRange& range() const { return range_; }

  Mat matrix(const Vec& u) const {
    require(u.size() == control_dimension(), "control value has the wrong dimension");
    Mat a = matrices_.front();
    for (int i = 0; i < control_dimension(); ++i) a += u[i] * matrices_[static_cast<std::size_t>(i) + 1];
    return a;
  }

  // The linear system on R^{d+1}.
  ControlAffineSystem linear_system() const {
    auto field = [](const Mat& a) {
      DynMat m = a;
      return VectorField{[m](const DynVec& x) { return DynVec(m * x); }, [m](const DynVec&) { return m; }};
    };
    std::vector<VectorField> inputs;
    for (std::size_t i = 1; i < matrices_.size(); ++i) inputs.push_back(field(matrices_[i]));
    return ControlAffineSystem(ambient_dimension(), field(matrices_.front()), std::move(inputs), range_);
  }

  // The projected fields x -> Ax - (x'Ax) x, which keep the unit sphere invariant.
  ControlAffineSystem projective_system() const {
    auto field = [](const Mat& a) {
      DynMat m = a;
      return VectorField{[m](const DynVec& x) { return DynVec(m * x - x.dot(m * x) * x); },
                         [m](const DynVec& x) {
                           const DynVec mx = m * x;
                           const double q = x.dot(mx);
                           const DynVec grad = (m + m.transpose()) * x;
                           return DynMat(m - q * DynMat::Identity(x.size(), x.size()) - x * grad.transpose());
                         }};
    };
    std::vector<VectorField> inputs;
    for (std::size_t i = 1; i < matrices_.size(); ++i) inputs.push_back(field(matrices_[i]));
    return ControlAffineSystem(ambient_dimension(), field(matrices_.front()), std::move(inputs), range_);
  }

 private:
  std::vector<Mat> matrices_;
  ControlRange range_;
};

inline Vec normalized(const Vec& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::NonFiniteState, "cannot normalize a zero or non-finite vector");
  return v / n;
}

// A line through the origin, stored as a unit representative.
class ProjectivePoint {
 public:
  ProjectivePoint() = default;
  explicit ProjectivePoint(const Vec& v) : rep_(normalized(v)) {}

  const Vec& representative() const { return rep_; }
  int dimension() const { return static_cast<int>(rep_.size()) - 1; }
  double distance(const ProjectivePoint& other) const { return projective_distance(rep_, other.rep_); }

 private:
  Vec rep_;
};

struct TangentFrame {
  Vec base;
  Mat basis;  // columns orthonormal and orthogonal to base

  int dimension() const { return static_cast<int>(basis.cols()); }
};

struct ProjectiveOptions {
  double max_step = 0.5;
  double separation_threshold = 0.05;
  double window = 0.0;  // 0 selects 30 / separation_threshold

  double effective_window() const { return window > 0.0 ? window : 30.0 / separation_threshold; }
};

inline Vec projective_vector_field(const Mat& a, const Vec& x) { return a * x - x.dot(a * x) * x; }

struct TransferStep {
  double from;
  double to;
  Mat forward;
};

namespace detail {

class TransferCache {
 public:
  explicit TransferCache(const BilinearSystem& sys) : sys_(sys) {}

  const Mat& get(const Vec& value, double dt) {
    for (const auto& e : entries_)
      if (e.dt == dt && e.value == value) return e.transfer;
    if (entries_.size() > 64) entries_.clear();
    entries_.push_back({value, dt, expm(dt * sys_.matrix(value))});
    return entries_.back().transfer;
  }

 private:
  struct Entry {
    Vec value;
    double dt;
    Mat transfer;
  };
  const BilinearSystem& sys_;
  std::vector<Entry> entries_;
};

}  // namespace detail

// Exact propagators exp(dt A(v)) over sub-steps no longer than max_step,
// aligned with the control breakpoints. t1 < t0 gives backward steps.
inline std::vector<TransferStep> transfer_steps(const BilinearSystem& sys, const PiecewiseConstantControl& u, double t0,
                                                double t1, double max_step) {
  require(max_step > 0.0, "max_step must be positive");
  require(u.dimension() == sys.control_dimension(), "control has the wrong dimension");
  detail::TransferCache cache(sys);
  std::vector<TransferStep> out;
  for (const auto& piece : u.pieces(t0, t1)) {
    const double len = piece.to - piece.from;
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(len) / max_step)));
    const double dt = len / n;
    for (int i = 0; i < n; ++i) {
      const double a = piece.from + i * dt;
      const double b = i + 1 == n ? piece.to : piece.from + (i + 1) * dt;
      out.push_back({a, b, cache.get(*piece.value, dt)});
    }
  }
  return out;
}

// Linear propagator over [t0, t1]; only for spans short enough not to overflow.
inline Mat transfer_matrix(const BilinearSystem& sys, const PiecewiseConstantControl& u, double t0, double t1,
                           double max_step = 0.5) {
  Mat m = Mat::Identity(sys.ambient_dimension(), sys.ambient_dimension());
  for (const auto& s : transfer_steps(sys, u, t0, t1, max_step)) m = s.forward * m;
  return m;
}

inline ProjectivePoint projective_flow(const BilinearSystem& sys, const ProjectivePoint& x, const PiecewiseConstantControl& u,
                                       double t, const ProjectiveOptions& opts = {}) {
  require(x.representative().size() == sys.ambient_dimension(), "point has the wrong dimension");
  Vec y = x.representative();
  for (const auto& s : transfer_steps(sys, u, 0.0, t, opts.max_step)) y = normalized(s.forward * y);
  return ProjectivePoint(y);
}

namespace detail {

// Pushes a tangent frame at y through E; returns the image base point.
inline Vec push_frame(const Mat& e, const Vec& y, Mat& frame) {
  const Vec z = e * y;
  const double nz = z.norm();
  if (!(nz > 0.0) || !std::isfinite(nz)) throw Error(ErrorCode::NonFiniteState, "projective image is not finite");
  const Vec image = z / nz;
  frame = (e * frame) / nz;
  frame -= image * (image.transpose() * frame);
  return image;
}

// Fixed orthogonal mixing of a tangent basis so that no column starts inside an
// exactly invariant coordinate subspace.
inline Mat generic_frame(const Vec& x) {
  const Mat b = tangent_basis(x);
  const int d = static_cast<int>(b.cols());
  Mat m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = 1.0 / (1.0 + i + j) + (i == j ? 1.0 : 0.0) + 0.1 * (i - j);
  return b * thin_qr(m).q;
}

struct FrameHistory {
  Mat frame;
  std::vector<double> log_growth;
  double span = 0.0;

  std::vector<double> exponents() const {
    std::vector<double> e;
    for (double v : log_growth) e.push_back(span > 0.0 ? v / span : 0.0);
    return e;
  }
};

// Frame at x obtained by pushing a full tangent frame forward from x(-T).
inline FrameHistory push_forward_from_past(const BilinearSystem& sys, const Vec& x, const PiecewiseConstantControl& u,
                                           double window, double max_step) {
  const auto steps = transfer_steps(sys, u, -window, 0.0, max_step);
  std::vector<Vec> points(steps.size() + 1);
  points.back() = x;
  for (std::size_t k = steps.size(); k > 0; --k) {
    const Mat inverse = steps[k - 1].forward.inverse();
    points[k - 1] = normalized(inverse * points[k]);
  }
  const int d = sys.projective_dimension();
  FrameHistory h{generic_frame(points.front()), std::vector<double>(static_cast<std::size_t>(d), 0.0)};
  // growth is recorded on the second half only, after the frame has aligned
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const Mat& e = steps[k].forward;
    const double nz = (e * points[k]).norm();
    Mat g = (e * h.frame) / nz;
    g -= points[k + 1] * (points[k + 1].transpose() * g);
    auto qr = thin_qr(g);
    if (steps[k].from >= -0.5 * window) {
      h.span += steps[k].to - steps[k].from;
      for (int i = 0; i < d; ++i) h.log_growth[static_cast<std::size_t>(i)] += qr.log_diag[static_cast<std::size_t>(i)];
    }
    h.frame = std::move(qr.q);
  }
  return h;
}

// Frame at x from the adjoint of the tangent maps along the orbit on [0, T];
// leading columns span the most expanded directions.
inline Mat pull_back_from_future(const BilinearSystem& sys, const Vec& x, const PiecewiseConstantControl& u,
                                 double window, double max_step) {
  const auto steps = transfer_steps(sys, u, 0.0, window, max_step);
  std::vector<Vec> points(steps.size() + 1);
  points.front() = x;
  std::vector<double> norms(steps.size());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const Vec z = steps[k].forward * points[k];
    norms[k] = z.norm();
    points[k + 1] = normalized(z);
  }
  Mat g = generic_frame(points.back());
  for (std::size_t k = steps.size(); k > 0; --k) {
    const Vec& base = points[k - 1];
    Mat h = (steps[k - 1].forward.transpose() * g) / norms[k - 1];
    h -= base * (base.transpose() * h);
    g = thin_qr(h).q;
  }
  return g;
}

}  // namespace detail

struct ProjectiveDerivative {
  Mat matrix;         // d x d in the frames below
  Mat source_basis;   // tangent_basis(x)
  Mat target_basis;   // tangent_basis(image)
  Vec image;
};

// Derivative of x -> phi(t, x, u) on RP^d in the canonical tangent frames.
inline ProjectiveDerivative projective_derivative(const BilinearSystem& sys, const ProjectivePoint& x,
                                                  const PiecewiseConstantControl& u, double t,
                                                  const ProjectiveOptions& opts = {}) {
  const int d = sys.projective_dimension();
  ProjectiveDerivative out;
  out.source_basis = tangent_basis(x.representative());
  if (t == 0.0) {
    out.matrix = Mat::Identity(d, d);
    out.target_basis = out.source_basis;
    out.image = x.representative();
    return out;
  }
  Vec y = x.representative();
  Mat m = out.source_basis;
  for (const auto& s : transfer_steps(sys, u, 0.0, t, opts.max_step)) y = detail::push_frame(s.forward, y, m);
  out.image = y;
  out.target_basis = tangent_basis(y);
  out.matrix = out.target_basis.transpose() * m;
  return out;
}

// Finite-time exponents from the forward push of a full tangent frame over
// [-T, 0] ending at x, averaged over [-T/2, 0], in the order produced by QR.
inline std::vector<double> finite_time_exponents(const BilinearSystem& sys, const ProjectivePoint& x,
                                                 const PiecewiseConstantControl& u, const ProjectiveOptions& opts = {}) {
  const double window = opts.effective_window();
  return detail::push_forward_from_past(sys, x.representative(), u, window, opts.max_step).exponents();
}

inline int auto_plus_dimension(const std::vector<double>& exponents, double threshold) {
  int p = 0;
  for (double e : exponents)
    if (e > threshold) ++p;
  return p;
}

inline double separation_rate(const std::vector<double>& exponents, int p) {
  const int d = static_cast<int>(exponents.size());
  if (p == 0) return std::numeric_limits<double>::infinity();
  if (p == d) return exponents[static_cast<std::size_t>(d - 1)];
  return exponents[static_cast<std::size_t>(p - 1)] - exponents[static_cast<std::size_t>(p)];
}

struct SplittingEstimate {
  TangentFrame plus;
  TangentFrame center_minus;
  double separation_rate = 0.0;
  double window = 0.0;
  std::vector<double> exponents;

  int plus_dimension() const { return plus.dimension(); }
};

inline SplittingEstimate estimate_splitting(const BilinearSystem& sys, const ProjectivePoint& x,
                                            const PiecewiseConstantControl& u, int p,
                                            const ProjectiveOptions& opts = {}) {
  const int d = sys.projective_dimension();
  require(p >= 0 && p <= d, "unstable dimension must lie in [0, d]");
  const Vec& base = x.representative();
  const double window = opts.effective_window();
  SplittingEstimate est;
  est.window = window;
  auto past = detail::push_forward_from_past(sys, base, u, window, opts.max_step);
  est.exponents = past.exponents();
  est.separation_rate = separation_rate(est.exponents, p);
  if (!(est.separation_rate >= opts.separation_threshold))
    throw Error(ErrorCode::NoSeparation, "exponent gap " + std::to_string(est.separation_rate) + " below threshold " +
                                             std::to_string(opts.separation_threshold));
  est.plus = {base, past.frame.leftCols(p)};
  if (p < d) {
    const Mat future = detail::pull_back_from_future(sys, base, u, window, opts.max_step);
    est.center_minus = {base, future.rightCols(d - p)};
  } else {
    est.center_minus = {base, Mat(d + 1, 0)};
  }
  Mat joint(d + 1, d);
  joint << est.plus.basis, est.center_minus.basis;
  if (smallest_singular_value(joint) <= 1e-6)
    throw Error(ErrorCode::FrameDegenerate, "unstable and center-stable frames are nearly dependent");
  return est;
}

struct UnstableDeterminant {
  double log_value = 0.0;
  TangentFrame transported;

  double value() const { return std::exp(log_value); }
};

// log of sqrt(det G'G / det F'F) where G is the image of the frame F.
inline UnstableDeterminant unstable_determinant(const BilinearSystem& sys, const TangentFrame& frame,
                                                const PiecewiseConstantControl& u, double t,
                                                const ProjectiveOptions& opts = {}) {
  require(frame.base.size() == sys.ambient_dimension(), "frame base has the wrong dimension");
  UnstableDeterminant out;
  Vec y = frame.base;
  const int p = frame.dimension();
  if (p == 0) {
    out.transported = {projective_flow(sys, ProjectivePoint(y), u, t, opts).representative(), Mat(y.size(), 0)};
    return out;
  }
  Mat f = thin_qr(frame.basis).q;
  for (const auto& s : transfer_steps(sys, u, 0.0, t, opts.max_step)) {
    y = detail::push_frame(s.forward, y, f);
    auto qr = thin_qr(f);
    for (double v : qr.log_diag) out.log_value += v;
    f = std::move(qr.q);
  }
  out.transported = {y, f};
  return out;
}

// Plus frame used for volume growth: the whole tangent space when p = d,
// otherwise the estimated unstable subspace.
inline TangentFrame plus_frame(const BilinearSystem& sys, const ProjectivePoint& x, const PiecewiseConstantControl& u, int p,
                               const ProjectiveOptions& opts = {}) {
  const int d = sys.projective_dimension();
  if (p == d) return {x.representative(), tangent_basis(x.representative())};
  if (p == 0) return {x.representative(), Mat(d + 1, 0)};
  return estimate_splitting(sys, x, u, p, opts).plus;
}

}  // namespace hinv
