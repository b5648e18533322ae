#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hinv/hinv.hpp"

using namespace hinv;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<int>(xs.size()));
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

BilinearSystem diag_example() {
  Mat a(2, 2);
  a << 1, 0, 0, -1;
  return BilinearSystem({a, a}, ControlRange({-0.5}, {0.5}));
}

BilinearSystem rotation_example() {
  Mat a0 = Mat::Zero(3, 3);
  a0(0, 1) = 1;
  a0(1, 0) = -1;
  a0(2, 2) = 2;
  Mat a1 = Mat::Zero(3, 3);
  a1(2, 2) = 1;
  return BilinearSystem({a0, a1}, ControlRange({-0.5}, {0.5}));
}

BilinearSystem random_system(std::mt19937& rng, int n) {
  std::normal_distribution<double> g(0.0, 0.7);
  Mat a0(n, n), a1(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      a0(i, j) = g(rng);
      a1(i, j) = g(rng);
    }
  return BilinearSystem({a0, a1}, ControlRange({-1.0}, {1.0}));
}

PiecewiseConstantControl random_control(std::mt19937& rng, double span) {
  std::uniform_real_distribution<double> val(-1.0, 1.0), gap(0.2, 0.9);
  std::vector<double> bps;
  for (double t = -span + gap(rng); t < span; t += gap(rng)) bps.push_back(t);
  std::vector<Vec> vals;
  for (std::size_t i = 0; i <= bps.size(); ++i) vals.push_back(vec({val(rng)}));
  return PiecewiseConstantControl(bps, vals);
}

Vec random_unit(std::mt19937& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v / v.norm();
}

Vec aligned(const Vec& v, const Vec& ref) { return v.dot(ref) < 0 ? Vec(-v) : v; }

}  // namespace

TEST(ProjectiveVectorField, EquilibriumAtEigendirection) {
  Mat a(2, 2);
  a << 1, 0, 0, -1;
  EXPECT_EQ(projective_vector_field(a, vec({1, 0})).norm(), 0.0);
}

TEST(ProjectiveVectorField, HandEvaluation) {
  Mat a(2, 2);
  a << 1, 0, 0, -1;
  const double r = 1.0 / std::sqrt(2.0);
  const Vec h = projective_vector_field(a, vec({r, r}));
  EXPECT_NEAR(h[0], r, 1e-15);
  EXPECT_NEAR(h[1], -r, 1e-15);
}

TEST(ProjectiveVectorField, TangentOnRandomInputs) {
  std::mt19937 rng(1);
  for (int k = 0; k < 100; ++k) {
    const auto sys = random_system(rng, 3);
    const Vec x = random_unit(rng, 3);
    const Vec h = projective_vector_field(sys.matrix(vec({0.3})), x);
    EXPECT_LT(std::abs(h.dot(x)), 1e-12);
  }
}

TEST(ProjectivePoint, MetricAxioms) {
  std::mt19937 rng(4);
  for (int k = 0; k < 200; ++k) {
    const Vec x = random_unit(rng, 3), y = random_unit(rng, 3);
    const double d = projective_distance(x, y);
    EXPECT_NEAR(d, projective_distance(y, x), 1e-15);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, std::numbers::pi / 2 + 1e-15);
    EXPECT_NEAR(d, std::acos(std::min(1.0, std::abs(x.dot(y)))), 1e-7);
    EXPECT_EQ(projective_distance(x, Vec(-x)), 0.0);
  }
  EXPECT_NEAR(ProjectivePoint(vec({3, 4})).representative().norm(), 1.0, 1e-12);
  EXPECT_THROW(ProjectivePoint(vec({0, 0})), Error);
}

TEST(ProjectiveFlow, ConvergesToDominantDirection) {
  const auto sys = diag_example();
  const auto u = PiecewiseConstantControl::constant(0.0);
  for (double alpha : {0.1, 1.0, 1.5, 2.0, 3.0}) {
    const auto y = projective_flow(sys, ProjectivePoint(vec({std::cos(alpha), std::sin(alpha)})), u, 20.0);
    EXPECT_LT(projective_distance(y.representative(), vec({1, 0})), 1e-6);
  }
}

TEST(ProjectiveFlow, InvariantEigendirection) {
  const auto sys = diag_example();
  const auto u = PiecewiseConstantControl::constant(0.4);
  for (double t : {-10.0, 0.5, 3.0, 50.0})
    EXPECT_EQ(projective_distance(projective_flow(sys, ProjectivePoint(vec({0, 1})), u, t).representative(), vec({0, 1})), 0.0);
}

TEST(ProjectiveFlow, RotationPlaneIsInvariant) {
  const auto sys = rotation_example();
  std::mt19937 rng(2);
  const auto u = random_control(rng, 30.0);
  for (double phi : {0.0, 0.4, 2.0}) {
    const auto y = projective_flow(sys, ProjectivePoint(vec({std::cos(phi), std::sin(phi), 0.0})), u, 25.0);
    EXPECT_LT(std::asin(std::abs(y.representative()[2])), 1e-8);
  }
}

TEST(ProjectiveFlow, AgreesWithRkOfProjectedField) {
  std::mt19937 rng(9);
  for (int k = 0; k < 10; ++k) {
    const auto sys = random_system(rng, 3);
    const auto u = random_control(rng, 4.0);
    const Vec x = random_unit(rng, 3);
    const auto exact = projective_flow(sys, ProjectivePoint(x), u, 2.0);
    const DynVec rk = integrate_trajectory(sys.projective_system(), DynVec(x), u, 2.0, {1e-3});
    EXPECT_LT(projective_distance(exact.representative(), Vec(rk)), 1e-6);
  }
}

TEST(ProjectiveDerivative, GapFormulaAtRepeller) {
  const auto sys = diag_example();
  for (double t : {0.5, 1.0, 3.0}) {
    const auto d = projective_derivative(sys, ProjectivePoint(vec({0, 1})), PiecewiseConstantControl::constant(0.0), t);
    ASSERT_EQ(d.matrix.rows(), 1);
    EXPECT_NEAR(std::abs(d.matrix(0, 0)), std::exp(2 * t), 1e-9 * std::exp(2 * t));
  }
}

TEST(ProjectiveDerivative, ZeroTimeIdentity) {
  const auto sys = rotation_example();
  const auto d = projective_derivative(sys, ProjectivePoint(vec({0.3, 0.4, 0.5})), PiecewiseConstantControl::constant(0.0), 0.0);
  EXPECT_EQ(d.matrix, Mat::Identity(2, 2));
}

TEST(ProjectiveDerivative, FiniteDifferenceMatch) {
  std::mt19937 rng(17);
  for (int k = 0; k < 20; ++k) {
    const auto sys = random_system(rng, 3);
    const auto u = random_control(rng, 3.0);
    const Vec x = random_unit(rng, 3);
    const double t = 1.2;
    const auto d = projective_derivative(sys, ProjectivePoint(x), u, t);
    const double eps = 1e-5;
    for (int j = 0; j < 2; ++j) {
      const Vec b = d.source_basis.col(j);
      const Vec yp = aligned(projective_flow(sys, ProjectivePoint(Vec(x + eps * b)), u, t).representative(), d.image);
      const Vec ym = aligned(projective_flow(sys, ProjectivePoint(Vec(x - eps * b)), u, t).representative(), d.image);
      const Vec fd = d.target_basis.transpose() * ((yp - ym) / (2 * eps));
      const double scale = std::max(1.0, d.matrix.col(j).norm());
      EXPECT_LT((fd - d.matrix.col(j)).norm() / scale, 1e-5);
    }
  }
}

TEST(ProjectiveDerivative, CocycleComposition) {
  std::mt19937 rng(23);
  for (int k = 0; k < 20; ++k) {
    const auto sys = random_system(rng, 3);
    const auto u = random_control(rng, 5.0);
    const Vec x = random_unit(rng, 3);
    const double t = 0.9, s = 1.4;
    const auto whole = projective_derivative(sys, ProjectivePoint(x), u, t + s);
    const auto first = projective_derivative(sys, ProjectivePoint(x), u, t);
    const auto second = projective_derivative(sys, ProjectivePoint(first.image), u.shifted(t), s);
    const Mat composed = second.matrix * first.matrix;
    // endpoint frames can differ, compare in one of them
    const Mat change = whole.target_basis.transpose() * second.target_basis;
    EXPECT_LT((whole.matrix - change * composed).norm() / whole.matrix.norm(), 1e-6);
  }
}

TEST(ProjectiveDerivative, SingularExponentsAtEigendirections) {
  Mat a = Mat::Zero(3, 3);
  a.diagonal() << 3.0, 1.0, -2.0;
  BilinearSystem sys({a, Mat::Zero(3, 3)}, ControlRange({-1.0}, {1.0}));
  const double lambda[3] = {3.0, 1.0, -2.0};
  const double t = 4.0;
  for (int i = 0; i < 3; ++i) {
    Vec e = Vec::Zero(3);
    e[i] = 1.0;
    const auto d = projective_derivative(sys, ProjectivePoint(e), PiecewiseConstantControl::constant(0.0), t);
    Eigen::JacobiSVD<DynMat> svd{DynMat(d.matrix)};
    std::vector<double> got, want;
    for (int k = 0; k < 2; ++k) got.push_back(std::log(svd.singularValues()[k]) / t);
    for (int j = 0; j < 3; ++j)
      if (j != i) want.push_back(lambda[j] - lambda[i]);
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(got[k], want[k], 1e-6);
  }
}

TEST(EstimateSplitting, DiagonalRepellerHasFullUnstableTangent) {
  const auto sys = diag_example();
  const auto est = estimate_splitting(sys, ProjectivePoint(vec({0, 1})), PiecewiseConstantControl::constant(0.0), 1);
  EXPECT_EQ(est.plus.dimension(), 1);
  EXPECT_EQ(est.center_minus.dimension(), 0);
  EXPECT_NEAR(est.exponents[0], 2.0, 1e-9);
  EXPECT_NEAR(std::abs(est.plus.basis(0, 0)), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(est.window, 600.0);
}

TEST(EstimateSplitting, RotationPlaneCenterDimension) {
  const auto sys = rotation_example();
  const ProjectivePoint x(vec({std::cos(0.3), std::sin(0.3), 0.0}));
  const auto est = estimate_splitting(sys, x, PiecewiseConstantControl::constant(0.0), 1);
  EXPECT_EQ(est.center_minus.dimension(), 1);  // rank 2 of the rotation bundle minus one
  EXPECT_EQ(est.plus.dimension() + est.center_minus.dimension(), 2);
  EXPECT_NEAR(std::abs(est.plus.basis(2, 0)), 1.0, 1e-9);
  EXPECT_LT(std::abs(est.center_minus.basis(2, 0)), 1e-9);
  EXPECT_NEAR(est.separation_rate, 2.0, 1e-3);
  EXPECT_LT(std::abs(est.plus.basis.col(0).dot(x.representative())), 1e-10);
}

TEST(EstimateSplitting, InvarianceUnderPushForward) {
  std::mt19937 rng(31);
  // a generic 3D system with real, well separated spectrum
  Mat a0(3, 3);
  a0 << 1.5, 0.3, 0.1, 0.2, 0.2, 0.4, -0.1, 0.3, -1.4;
  Mat a1 = 0.2 * Mat::Identity(3, 3);
  a1(0, 1) = 0.3;
  BilinearSystem sys({a0, a1}, ControlRange({-1.0}, {1.0}));
  const auto u = random_control(rng, 150.0);
  const ProjectiveOptions opts{0.5, 0.05, 100.0};
  const Vec x = random_unit(rng, 3);
  for (int p : {1, 2}) {
    const auto est = estimate_splitting(sys, ProjectivePoint(x), u, p, opts);
    const double s = 1.7;
    const auto moved = unstable_determinant(sys, est.plus, u, s, opts).transported;
    const auto again = estimate_splitting(sys, ProjectivePoint(moved.base), u.shifted(s), p, opts);
    EXPECT_LT(largest_principal_angle(moved.basis, again.plus.basis), 1e-3);
  }
}

TEST(EstimateSplitting, NoSeparationWithoutGap) {
  BilinearSystem sys({Mat::Zero(3, 3), Mat::Zero(3, 3)}, ControlRange({-1.0}, {1.0}));
  try {
    estimate_splitting(sys, ProjectivePoint(vec({1, 0, 0})), PiecewiseConstantControl::constant(0.0), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoSeparation);
  }
}

TEST(EstimateSplitting, DimensionsConstantAlongTrajectory) {
  const auto sys = rotation_example();
  std::mt19937 rng(12);
  const auto u = random_control(rng, 700.0);
  Vec x = vec({1, 0, 0});
  for (int k = 0; k < 5; ++k) {
    const auto est = estimate_splitting(sys, ProjectivePoint(x), u.shifted(3.0 * k), 1);
    EXPECT_EQ(est.plus.dimension(), 1);
    EXPECT_EQ(est.center_minus.dimension(), 1);
    const auto exps = est.exponents;
    EXPECT_EQ(auto_plus_dimension(exps, 0.05), 1);
    x = projective_flow(sys, ProjectivePoint(x), u.shifted(3.0 * k), 3.0).representative();
  }
}

TEST(UnstableDeterminant, GapFormula) {
  const auto sys = diag_example();
  const TangentFrame f{vec({0, 1}), tangent_basis(vec({0, 1}))};
  const auto j = unstable_determinant(sys, f, PiecewiseConstantControl::constant(0.0), 1.0);
  EXPECT_NEAR(j.value(), std::exp(2.0), 1e-8 * std::exp(2.0));
}

TEST(UnstableDeterminant, ZeroTimeIsOne) {
  const auto sys = rotation_example();
  const TangentFrame f{vec({1, 0, 0}), tangent_basis(vec({1, 0, 0})).leftCols(1)};
  EXPECT_EQ(unstable_determinant(sys, f, PiecewiseConstantControl::constant(0.2), 0.0).value(), 1.0);
}

TEST(UnstableDeterminant, GramRatioOracle) {
  std::mt19937 rng(41);
  for (int k = 0; k < 20; ++k) {
    const auto sys = random_system(rng, 3);
    const auto u = random_control(rng, 3.0);
    const Vec x = random_unit(rng, 3);
    const Mat basis = tangent_basis(x);
    Mat coords = Mat::Random(2, 1);
    const TangentFrame f{x, basis * coords};
    const auto d = projective_derivative(sys, ProjectivePoint(x), u, 1.5);
    const Mat g = d.matrix * coords;
    const double ratio = std::sqrt((g.transpose() * g).determinant() / (coords.transpose() * coords).determinant());
    EXPECT_NEAR(unstable_determinant(sys, f, u, 1.5).log_value, std::log(ratio), 1e-9);
  }
}

TEST(UnstableDeterminant, AdditiveCocycle) {
  std::mt19937 rng(43);
  for (int k = 0; k < 100; ++k) {
    const auto sys = random_system(rng, 3);
    const auto u = random_control(rng, 6.0);
    const Vec x = random_unit(rng, 3);
    const int p = 1 + k % 2;
    const TangentFrame f{x, tangent_basis(x).leftCols(p)};
    std::uniform_real_distribution<double> tt(0.2, 2.5);
    const double t = tt(rng), s = tt(rng);
    const auto whole = unstable_determinant(sys, f, u, t + s);
    const auto first = unstable_determinant(sys, f, u, t);
    const auto second = unstable_determinant(sys, first.transported, u.shifted(t), s);
    EXPECT_NEAR(whole.log_value, first.log_value + second.log_value, 1e-6);
  }
}

TEST(UnstableDeterminant, LongHorizonsDoNotOverflow) {
  const auto sys = diag_example();
  const TangentFrame f{vec({0, 1}), tangent_basis(vec({0, 1}))};
  const auto j = unstable_determinant(sys, f, PiecewiseConstantControl::constant(0.5), 1000.0);
  EXPECT_NEAR(j.log_value, 3000.0, 1e-8 * 3000.0);
}
