// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "phred/core.hpp"

#include <functional>

namespace phred {

enum class Scheme { ImplicitMidpoint, Rk4 };

struct IntegratorConfig {
  Scheme scheme = Scheme::ImplicitMidpoint;
  double dt = 1e-2;
  double newton_tol = 1e-10;
  int newton_max_iter = 25;
};

struct TimeSpan {
  double t0 = 0.0;
  double t1 = 1.0;
};

using InputFn = std::function<Vector(double)>;

/// First-order system x' = f(t, x, u(t)). The Jacobian callbacks return
/// df/dx; when both are empty the midpoint solver differences `rhs`.
struct OdeSystem {
  Index dim = 0;
  Index ports = 0;
  std::function<Vector(double, const Vector&, const Vector&)> rhs;
  std::function<Matrix(double, const Vector&, const Vector&)> jacobian;
  // Optional rhs and dense jacobian from one evaluation.
  std::function<std::pair<Vector, Matrix>(double, const Vector&, const Vector&)> rhs_and_jacobian;
  std::function<SparseMatrix(double, const Vector&, const Vector&)> sparse_jacobian;
  std::function<Vector(const Vector&)> output;
};

/// Number of steps for the span, rounding to the nearest multiple of dt.
Index step_count(TimeSpan span, double dt);

Trajectory integrate(const OdeSystem& ode, const Vector& x0, const InputFn& input, TimeSpan span,
                     const IntegratorConfig& cfg);

/// ODE view of a port-Hamiltonian system. With a Hessian callback the
/// Jacobian (J - R) hess H(x) is analytic; large sparse systems get the
/// sparse variant.
OdeSystem as_ode(const NlphSystem& sys);

/// Simulates from x0 (zero when empty) and records y = B^T grad H(x).
Trajectory simulate(const NlphSystem& sys, const InputFn& input, TimeSpan span,
                    const IntegratorConfig& cfg, const Vector& x0 = Vector());

}  // namespace phred
