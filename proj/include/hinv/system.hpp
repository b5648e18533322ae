#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hinv/control.hpp"
#include "hinv/error.hpp"
#include "hinv/linalg.hpp"

namespace hinv {

struct VectorField {
  std::function<DynVec(const DynVec&)> value;
  std::function<DynMat(const DynVec&)> jacobian;
};

// x' = f0(x) + sum_i u_i f_i(x) on R^D.
class ControlAffineSystem {
 public:
  ControlAffineSystem(int dimension, VectorField drift, std::vector<VectorField> inputs, ControlRange range)
      : dimension_(dimension), drift_(std::move(drift)), inputs_(std::move(inputs)), range_(std::move(range)) {
    require(dimension_ >= 1, "state dimension must be positive");
    require(static_cast<int>(inputs_.size()) == range_.dimension(), "one input field per control axis");
    require(drift_.value && drift_.jacobian, "drift needs value and jacobian");
    for (const auto& f : inputs_) require(f.value && f.jacobian, "input fields need value and jacobian");
  }

  int dimension() const { return dimension_; }
  int control_dimension() const { return static_cast<int>(inputs_.size()); }
  const ControlRange& range() const { return range_; }

  DynVec field(const DynVec& x, const Vec& u) const {
    DynVec out = drift_.value(x);
    for (std::size_t i = 0; i < inputs_.size(); ++i) out += u[static_cast<int>(i)] * inputs_[i].value(x);
    return out;
  }

  DynMat jacobian(const DynVec& x, const Vec& u) const {
    DynMat out = drift_.jacobian(x);
    for (std::size_t i = 0; i < inputs_.size(); ++i) out += u[static_cast<int>(i)] * inputs_[i].jacobian(x);
    return out;
  }

 private:
  int dimension_;
  VectorField drift_;
  std::vector<VectorField> inputs_;
  ControlRange range_;
};

struct IntegrationOptions {
  double step = 1e-3;
  double blowup_bound = 1e6;
};

struct VariationalState {
  DynVec state;
  DynMat derivative;
};

namespace detail {

inline void check_state(const DynVec& x, const IntegrationOptions& opts, double t) {
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteState, "state became non-finite at t=" + std::to_string(t));
  if (x.norm() > opts.blowup_bound) throw Error(ErrorCode::Blowup, "state norm exceeded bound at t=" + std::to_string(t));
}

template <class Step>
void march(const PiecewiseConstantControl& u, double t, const IntegrationOptions& opts, Step&& step) {
  require(opts.step > 0.0, "integration step must be positive");
  for (const auto& piece : u.pieces(0.0, t)) {
    const double len = piece.to - piece.from;
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(len) / opts.step)));
    const double h = len / n;
    for (int i = 0; i < n; ++i) step(*piece.value, h, piece.from + (i + 1) * h);
  }
}

}  // namespace detail

// Classical RK4 with steps aligned to the control breakpoints. Negative t
// integrates backward.
inline DynVec integrate_trajectory(const ControlAffineSystem& sys, const DynVec& x0, const PiecewiseConstantControl& u,
                                   double t, const IntegrationOptions& opts = {}) {
  require(x0.size() == sys.dimension(), "initial state has the wrong dimension");
  require(u.dimension() == sys.control_dimension(), "control has the wrong dimension");
  DynVec x = x0;
  detail::check_state(x, opts, 0.0);
  detail::march(u, t, opts, [&](const Vec& v, double h, double t_end) {
    const DynVec k1 = sys.field(x, v);
    const DynVec k2 = sys.field(x + 0.5 * h * k1, v);
    const DynVec k3 = sys.field(x + 0.5 * h * k2, v);
    const DynVec k4 = sys.field(x + h * k3, v);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    detail::check_state(x, opts, t_end);
  });
  return x;
}

// RK4 on the joint system (x, D) with D' = Df(x, u) D, D(0) = I.
inline VariationalState integrate_variational(const ControlAffineSystem& sys, const DynVec& x0,
                                              const PiecewiseConstantControl& u, double t,
                                              const IntegrationOptions& opts = {}) {
  require(x0.size() == sys.dimension(), "initial state has the wrong dimension");
  require(u.dimension() == sys.control_dimension(), "control has the wrong dimension");
  VariationalState s{x0, DynMat::Identity(sys.dimension(), sys.dimension())};
  detail::check_state(s.state, opts, 0.0);
  detail::march(u, t, opts, [&](const Vec& v, double h, double t_end) {
    const DynVec& x = s.state;
    const DynMat& d = s.derivative;
    const DynVec k1 = sys.field(x, v);
    const DynMat m1 = sys.jacobian(x, v) * d;
    const DynVec x2 = x + 0.5 * h * k1;
    const DynMat d2 = d + 0.5 * h * m1;
    const DynVec k2 = sys.field(x2, v);
    const DynMat m2 = sys.jacobian(x2, v) * d2;
    const DynVec x3 = x + 0.5 * h * k2;
    const DynMat d3 = d + 0.5 * h * m2;
    const DynVec k3 = sys.field(x3, v);
    const DynMat m3 = sys.jacobian(x3, v) * d3;
    const DynVec x4 = x + h * k3;
    const DynMat d4 = d + h * m3;
    const DynVec k4 = sys.field(x4, v);
    const DynMat m4 = sys.jacobian(x4, v) * d4;
    s.state = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    s.derivative = d + (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
    detail::check_state(s.state, opts, t_end);
    if (!s.derivative.allFinite()) throw Error(ErrorCode::NonFiniteState, "derivative became non-finite");
  });
  return s;
}

}  // namespace hinv
