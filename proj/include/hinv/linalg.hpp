#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hinv/error.hpp"

namespace hinv {

// Projective computations run in small ambient dimensions; a bounded static
// buffer keeps the inner loops allocation free.
inline constexpr int kMaxAmbient = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxAmbient, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxAmbient, kMaxAmbient>;

using DynVec = Eigen::VectorXd;
using DynMat = Eigen::MatrixXd;

inline Mat expm(const Mat& a) {
  DynMat full = a;
  DynMat e = full.exp();
  return e;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

// Orthonormal basis of the orthogonal complement of a unit vector, built from a
// Householder reflection so that coordinate axes map to coordinate axes.
inline Mat tangent_basis(const Vec& x) {
  const int n = static_cast<int>(x.size());
  int k = 0;
  for (int i = 1; i < n; ++i)
    if (std::abs(x[i]) > std::abs(x[k])) k = i;
  Vec v = x;
  const double s = x[k] >= 0.0 ? 1.0 : -1.0;
  v[k] += s;
  const double vv = v.squaredNorm();
  Mat basis(n, n - 1);
  int col = 0;
  for (int j = 0; j < n; ++j) {
    if (j == k) continue;
    Vec e = Vec::Zero(n);
    e[j] = 1.0;
    basis.col(col++) = e - (2.0 * v[j] / vv) * v;
  }
  return basis;
}

// Angle metric on the projective space, evaluated through chord lengths so that
// small distances keep full relative precision.
inline double projective_distance(const Vec& x, const Vec& y) {
  const double minus = (x - y).norm();
  const double plus = (x + y).norm();
  const double chord = std::min(minus, plus);
  return 2.0 * std::asin(std::min(1.0, 0.5 * chord));
}

struct ThinQR {
  Mat q;
  std::vector<double> log_diag;
};

// Thin QR with a positive diagonal in R.
inline ThinQR thin_qr(const Mat& f) {
  const int n = static_cast<int>(f.rows());
  const int k = static_cast<int>(f.cols());
  Eigen::HouseholderQR<Mat> qr(f);
  Mat q = qr.householderQ() * Mat::Identity(n, k);
  const Mat r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  ThinQR out;
  out.log_diag.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double d = r(i, i);
    if (d < 0.0) q.col(i) = -q.col(i);
    out.log_diag[static_cast<std::size_t>(i)] = std::log(std::abs(d));
  }
  out.q = std::move(q);
  return out;
}

// Largest principal angle between the column spans of two orthonormal frames of
// equal width.
inline double largest_principal_angle(const Mat& a, const Mat& b) {
  if (a.cols() == 0 && b.cols() == 0) return 0.0;
  DynMat m = a.transpose() * b;
  Eigen::JacobiSVD<DynMat> svd(m);
  const double smin = svd.singularValues().minCoeff();
  return std::acos(std::clamp(smin, -1.0, 1.0));
}

inline double smallest_singular_value(const Mat& m) {
  if (m.cols() == 0) return 1.0;
  DynMat d = m;
  Eigen::JacobiSVD<DynMat> svd(d);
  return svd.singularValues().minCoeff();
}

}  // namespace hinv
