#include <gtest/gtest.h>

#include <cmath>
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

// Independent oracle: truncated Taylor series after scaling by 2^-s, then squaring.
DynMat taylor_expm(const DynMat& a) {
  int s = 0;
  double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.5) {
    norm /= 2.0;
    ++s;
  }
  const DynMat b = a / std::pow(2.0, s);
  DynMat term = DynMat::Identity(a.rows(), a.cols());
  DynMat sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * b / k;
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

BilinearSystem diag_system() {
  Mat a(2, 2);
  a << 1, 0, 0, -1;
  return BilinearSystem({a, a}, ControlRange({-0.5}, {0.5}));
}

// A nonlinear control-affine test system on R^2 with closed-form Jacobians.
ControlAffineSystem pendulum_like() {
  VectorField drift{[](const DynVec& x) {
                      DynVec f(2);
                      f << x[1], -std::sin(x[0]) - 0.1 * x[1];
                      return f;
                    },
                    [](const DynVec& x) {
                      DynMat j(2, 2);
                      j << 0, 1, -std::cos(x[0]), -0.1;
                      return j;
                    }};
  VectorField input{[](const DynVec& x) {
                      DynVec f(2);
                      f << 0.0, std::cos(x[0]);
                      return f;
                    },
                    [](const DynVec& x) {
                      DynMat j(2, 2);
                      j << 0, 0, -std::sin(x[0]), 0;
                      return j;
                    }};
  return ControlAffineSystem(2, drift, {input}, ControlRange({-1.0}, {1.0}));
}

PiecewiseConstantControl random_control(std::mt19937& rng, double span) {
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  std::uniform_real_distribution<double> gap(0.1, 0.6);
  std::vector<double> bps;
  double t = -span;
  while (true) {
    t += gap(rng);
    if (t >= span) break;
    bps.push_back(t);
  }
  std::vector<Vec> vals;
  for (std::size_t i = 0; i <= bps.size(); ++i) vals.push_back(vec({val(rng)}));
  return PiecewiseConstantControl(bps, vals);
}

}  // namespace

TEST(ControlRange, MembershipIsTheBox) {
  ControlRange r({-0.5, 0.0}, {0.5, 2.0});
  EXPECT_TRUE(r.contains(vec({0.5, 2.0})));
  EXPECT_TRUE(r.contains(vec({-0.5, 0.0})));
  EXPECT_FALSE(r.contains(vec({0.50001, 1.0})));
  EXPECT_FALSE(r.contains(vec({0.0, -1e-9})));
  EXPECT_FALSE(r.contains(vec({0.0})));
}

TEST(ControlRange, SinglePointNeedsFlag) {
  EXPECT_THROW(ControlRange({0.0}, {0.0}), Error);
  EXPECT_NO_THROW(ControlRange({0.0}, {0.0}, true));
  EXPECT_THROW(ControlRange({1.0}, {0.0}), Error);
}

TEST(ControlRange, LatticeHasEndpoints) {
  ControlRange r({-0.5}, {0.5});
  const auto l = r.lattice(5);
  ASSERT_EQ(l.size(), 5u);
  EXPECT_EQ(l.front()[0], -0.5);
  EXPECT_EQ(l[2][0], 0.0);
  EXPECT_EQ(l.back()[0], 0.5);
  EXPECT_EQ(ControlRange({0, 0}, {1, 1}).lattice(3).size(), 9u);
}

TEST(EvaluateControl, ConstantEverywhere) {
  const auto u = PiecewiseConstantControl::constant(0.3);
  for (double t : {-1e6, -1.0, 0.0, 2.5, 1e9}) EXPECT_EQ(u(t)[0], 0.3);
}

TEST(EvaluateControl, RightContinuousAtBreakpoint) {
  PiecewiseConstantControl u({0.0}, {vec({1.0}), vec({2.0})});
  EXPECT_EQ(u(0.0)[0], 2.0);
  EXPECT_EQ(u(-1e-12)[0], 1.0);
}

TEST(EvaluateControl, PieceLookup) {
  PiecewiseConstantControl u({0.0, 1.0}, {vec({1.0}), vec({2.0}), vec({3.0})});
  EXPECT_EQ(u(0.5)[0], 2.0);
  EXPECT_EQ(u(-5.0)[0], 1.0);
  EXPECT_EQ(u(1.0)[0], 3.0);
}

TEST(EvaluateControl, RejectsBadBreakpointsAndRange) {
  EXPECT_THROW(PiecewiseConstantControl({1.0, 0.0}, {vec({0}), vec({1}), vec({2})}), Error);
  EXPECT_THROW(PiecewiseConstantControl({0.0}, {vec({0})}), Error);
  EXPECT_THROW(PiecewiseConstantControl({0.0}, {vec({0}), vec({0.9})}, ControlRange({-0.5}, {0.5})), Error);
}

TEST(ShiftControl, ZeroShiftIsIdentity) {
  PiecewiseConstantControl u({0.25, 1.5}, {vec({1}), vec({2}), vec({3})});
  EXPECT_EQ(u.shifted(0.0), u);
}

TEST(ShiftControl, DefinitionOfShift) {
  PiecewiseConstantControl u({1.0}, {vec({-0.5}), vec({0.5})});
  const auto s = u.shifted(1.0);
  EXPECT_EQ(s(0.0)[0], 0.5);
  EXPECT_EQ(s(-0.001)[0], -0.5);
}

TEST(ShiftControl, GroupProperty) {
  PiecewiseConstantControl u({0.25, 1.5, 3.0}, {vec({1}), vec({2}), vec({3}), vec({1})});
  EXPECT_EQ(u.shifted(0.75).shifted(-0.75), u);
  EXPECT_EQ(u.shifted(0.5).shifted(1.25), u.shifted(1.75));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> t(-5, 5);
  for (int i = 0; i < 200; ++i) {
    const double s = t(rng), x = t(rng);
    EXPECT_EQ(u.shifted(s)(x)[0], u(x + s)[0]);
  }
}

TEST(ShiftControl, NormalizationMergesEqualNeighbours) {
  PiecewiseConstantControl u({0.0, 1.0}, {vec({1}), vec({1}), vec({2})});
  EXPECT_EQ(u.breakpoints().size(), 1u);
  EXPECT_EQ(u.breakpoints()[0], 1.0);
}

TEST(IntegrateTrajectory, DiagonalClosedForm) {
  const auto sys = diag_system().linear_system();
  DynVec x0(2);
  x0 << 1, 1;
  const auto x = integrate_trajectory(sys, x0, PiecewiseConstantControl::constant(0.0), 1.0, {1e-3});
  EXPECT_NEAR(x[0], std::exp(1.0), 1e-8);
  EXPECT_NEAR(x[1], std::exp(-1.0), 1e-8);
}

TEST(IntegrateTrajectory, ZeroTimeIsExact) {
  const auto sys = pendulum_like();
  DynVec x0(2);
  x0 << 0.3, -0.7;
  const auto x = integrate_trajectory(sys, x0, PiecewiseConstantControl::constant(0.2), 0.0);
  EXPECT_EQ(x, x0);
}

TEST(IntegrateTrajectory, CocycleAtSevenTenthsAndThreeTenths) {
  const auto sys = pendulum_like();
  PiecewiseConstantControl u({0.2, 0.55, 0.9}, {vec({0.3}), vec({-1.0}), vec({0.8}), vec({0.1})});
  DynVec x0(2);
  x0 << 0.4, 0.2;
  const auto direct = integrate_trajectory(sys, x0, u, 1.0);
  const auto first = integrate_trajectory(sys, x0, u, 0.3);
  const auto composed = integrate_trajectory(sys, first, u.shifted(0.3), 0.7);
  EXPECT_LT((direct - composed).norm(), 1e-6);
}

TEST(IntegrateTrajectory, BackwardUndoesForward) {
  const auto sys = pendulum_like();
  const auto u = PiecewiseConstantControl::constant(0.5);
  DynVec x0(2);
  x0 << 1.0, -0.5;
  const auto fwd = integrate_trajectory(sys, x0, u, 2.0);
  const auto back = integrate_trajectory(sys, fwd, u.shifted(2.0), -2.0);
  EXPECT_LT((back - x0).norm(), 1e-8);
}

TEST(IntegrateTrajectory, BlowupAndNonFinite) {
  Mat a(2, 2);
  a << 10, 0, 0, 10;
  BilinearSystem big({a, Mat::Zero(2, 2)}, ControlRange({-1.0}, {1.0}));
  DynVec x0(2);
  x0 << 1, 0;
  try {
    integrate_trajectory(big.linear_system(), x0, PiecewiseConstantControl::constant(0.0), 5.0, {1e-3, 1e6});
    FAIL() << "expected blowup";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Blowup);
  }
  DynVec bad(2);
  bad << std::nan(""), 0.0;
  try {
    integrate_trajectory(big.linear_system(), bad, PiecewiseConstantControl::constant(0.0), 1.0);
    FAIL() << "expected non-finite";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteState);
  }
}

TEST(IntegrateVariational, DiagonalExponential) {
  const auto sys = diag_system().linear_system();
  DynVec x0(2);
  x0 << 0.3, 2.0;
  const auto s = integrate_variational(sys, x0, PiecewiseConstantControl::constant(0.0), 1.0);
  DynMat a(2, 2);
  a << 1, 0, 0, -1;
  EXPECT_LT((s.derivative - taylor_expm(a)).norm(), 1e-8);
  EXPECT_NEAR(s.derivative(0, 0), std::exp(1.0), 1e-8);
  EXPECT_NEAR(s.derivative(1, 1), std::exp(-1.0), 1e-8);
}

TEST(IntegrateVariational, ZeroTimeIdentity) {
  const auto s = integrate_variational(pendulum_like(), DynVec::Zero(2), PiecewiseConstantControl::constant(0.0), 0.0);
  EXPECT_EQ(s.derivative, DynMat::Identity(2, 2));
}

TEST(IntegrateVariational, BilinearMatchesExponentialOracle) {
  std::mt19937 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Mat a0(3, 3), a1(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        a0(i, j) = 0.5 * g(rng);
        a1(i, j) = 0.5 * g(rng);
      }
    BilinearSystem bs({a0, a1}, ControlRange({-1.0}, {1.0}));
    const double u = 0.37;
    DynVec x0 = DynVec::Random(3);
    const auto s = integrate_variational(bs.linear_system(), x0, PiecewiseConstantControl::constant(u), 1.3);
    const DynMat oracle = taylor_expm(DynMat(1.3 * (a0 + u * a1)));
    EXPECT_LT((s.derivative - oracle).norm() / oracle.norm(), 1e-8);
    const DynMat lib = expm(Mat(1.3 * (a0 + u * a1)));
    EXPECT_LT((lib - oracle).norm() / oracle.norm(), 1e-12);
  }
}

TEST(IntegrateVariational, FiniteDifferenceColumns) {
  const auto sys = pendulum_like();
  PiecewiseConstantControl u({0.4}, {vec({0.5}), vec({-0.3})});
  DynVec x0(2);
  x0 << 0.7, 0.1;
  const auto s = integrate_variational(sys, x0, u, 1.5);
  const double eps = 1e-5;
  for (int j = 0; j < 2; ++j) {
    DynVec e = DynVec::Zero(2);
    e[j] = eps;
    const DynVec fd = (integrate_trajectory(sys, x0 + e, u, 1.5) - integrate_trajectory(sys, x0 - e, u, 1.5)) / (2 * eps);
    EXPECT_LT((fd - s.derivative.col(j)).norm(), 1e-7);
  }
}

TEST(IntegrateVariational, JacobianMatchesFiniteDifferences) {
  const auto sys = pendulum_like();
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int k = 0; k < 20; ++k) {
    DynVec x(2);
    x << d(rng), d(rng);
    Vec u = vec({d(rng) / 2});
    const DynMat j = sys.jacobian(x, u);
    for (int c = 0; c < 2; ++c) {
      DynVec e = DynVec::Zero(2);
      e[c] = 1e-6;
      const DynVec fd = (sys.field(x + e, u) - sys.field(x - e, u)) / 2e-6;
      EXPECT_LT((fd - j.col(c)).norm(), 1e-8);
    }
  }
}

TEST(Properties, FlowCocycleAndChainRuleOnRandomSamples) {
  const auto sys = pendulum_like();
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> d(-1.5, 1.5), tt(0.1, 1.5);
  for (int k = 0; k < 30; ++k) {
    const auto u = random_control(rng, 4.0);
    DynVec x0(2);
    x0 << d(rng), d(rng);
    const double t = tt(rng), s = tt(rng);
    const auto direct = integrate_variational(sys, x0, u, t + s);
    const auto first = integrate_variational(sys, x0, u, s);
    const auto second = integrate_variational(sys, first.state, u.shifted(s), t);
    EXPECT_LT((direct.state - second.state).norm(), 1e-6);
    EXPECT_LT((direct.derivative - second.derivative * first.derivative).norm(), 1e-6);
    EXPECT_GT(std::abs(direct.derivative.determinant()), 0.0);
  }
}

TEST(Properties, ShiftFlowConsistency) {
  // The trajectory of (phi(s, x, u), theta_s u) is the time-shifted trajectory of (x, u).
  const auto sys = pendulum_like();
  std::mt19937 rng(8);
  const auto u = random_control(rng, 5.0);
  DynVec x0(2);
  x0 << 0.2, 0.9;
  const double s = 0.8;
  const auto xs = integrate_trajectory(sys, x0, u, s);
  for (double t : {0.3, 0.9, 1.7}) {
    const auto a = integrate_trajectory(sys, xs, u.shifted(s), t);
    const auto b = integrate_trajectory(sys, x0, u, s + t);
    EXPECT_LT((a - b).norm(), 1e-6);
  }
}

TEST(Properties, BilinearExactnessAgainstRk) {
  std::mt19937 rng(2);
  Mat a0(3, 3), a1(3, 3);
  std::normal_distribution<double> g(0.0, 0.6);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      a0(i, j) = g(rng);
      a1(i, j) = g(rng);
    }
  BilinearSystem bs({a0, a1}, ControlRange({-1.0}, {1.0}));
  const auto u = random_control(rng, 3.0);
  const Mat exact = transfer_matrix(bs, u, 0.0, 2.0);
  const auto rk = integrate_variational(bs.linear_system(), DynVec::Ones(3), u, 2.0, {1e-3});
  EXPECT_LT((DynMat(exact) - rk.derivative).norm() / rk.derivative.norm(), 1e-8);
}
