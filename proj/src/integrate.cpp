// SPDX-License-Identifier: Apache-2.0
#include "phred/integrate.hpp"

#include "phred/error.hpp"

#include <Eigen/LU>
#include <Eigen/SparseLU>
#include <fmt/format.h>

#include <cmath>
#include <memory>

namespace phred {

Index step_count(TimeSpan span, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw Error(ErrorCode::Config, fmt::format("time step must be positive, got {}", dt));
  if (!(span.t1 > span.t0))
    throw Error(ErrorCode::Config, fmt::format("empty time span [{}, {}]", span.t0, span.t1));
  return std::max<Index>(1, std::llround((span.t1 - span.t0) / dt));
}

namespace {

constexpr Index kSparseThreshold = 200;

class LinearSolver {
 public:
  explicit LinearSolver(bool sparse) : sparse_(sparse) {}

  void factor_dense(const Matrix& A) {
    dense_.compute(A);
  }

  void factor_sparse(const SparseMatrix& A) {
    if (!analyzed_ || !same_pattern(A)) {
      sparse_lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
      sparse_lu_->analyzePattern(A);
      pattern_ = A;
      analyzed_ = true;
    }
    sparse_lu_->factorize(A);
    if (sparse_lu_->info() != Eigen::Success)
      throw Error(ErrorCode::Convergence, "singular Newton matrix");
  }

  Vector solve(const Vector& b) const {
    if (sparse_) return sparse_lu_->solve(b);
    return dense_.solve(b);
  }

  bool sparse() const { return sparse_; }

 private:
  bool same_pattern(const SparseMatrix& A) const {
    if (A.nonZeros() != pattern_.nonZeros() || A.rows() != pattern_.rows()) return false;
    for (Index k = 0; k <= A.outerSize(); ++k)
      if (A.outerIndexPtr()[k] != pattern_.outerIndexPtr()[k]) return false;
    for (Index k = 0; k < A.nonZeros(); ++k)
      if (A.innerIndexPtr()[k] != pattern_.innerIndexPtr()[k]) return false;
    return true;
  }

  bool sparse_;
  bool analyzed_ = false;
  SparseMatrix pattern_;
  std::unique_ptr<Eigen::SparseLU<SparseMatrix>> sparse_lu_;
  Eigen::PartialPivLU<Matrix> dense_;
};

Matrix fd_jacobian(const OdeSystem& ode, double t, const Vector& x, const Vector& u) {
  const Index n = x.size();
  Matrix Jac(n, n);
  const Vector f0 = ode.rhs(t, x, u);
  Vector xp = x;
  for (Index j = 0; j < n; ++j) {
    const double h = 1e-7 * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + h;
    Jac.col(j) = (ode.rhs(t, xp, u) - f0) / h;
    xp(j) = x(j);
  }
  return Jac;
}

void check_finite(const Vector& x, double t) {
  if (!x.allFinite())
    throw Error(ErrorCode::Divergence, fmt::format("state became non-finite at t = {}", t));
}

double scaled_norm(const Vector& v) { return v.lpNorm<Eigen::Infinity>(); }

}  // namespace

Trajectory integrate(const OdeSystem& ode, const Vector& x0, const InputFn& input, TimeSpan span,
                     const IntegratorConfig& cfg) {
  const Index steps = step_count(span, cfg.dt);
  const Index n = x0.size();
  if (n != ode.dim)
    throw Error(ErrorCode::Structure,
                fmt::format("initial state has size {}, system has {}", n, ode.dim));
  check_finite(x0, span.t0);
  const double dt = cfg.dt;

  Trajectory traj;
  traj.times.resize(steps + 1);
  traj.states.resize(steps + 1, n);
  traj.inputs.resize(steps + 1, ode.ports);
  if (ode.output) traj.outputs.resize(steps + 1, ode.ports);

  auto record = [&](Index k, double t, const Vector& x) {
    traj.times[k] = t;
    traj.states.row(k) = x.transpose();
    traj.inputs.row(k) = input(t).transpose();
    if (ode.output) traj.outputs.row(k) = ode.output(x).transpose();
  };

  Vector x = x0;
  Vector x_prev = x0;
  record(0, span.t0, x);

  const bool sparse = !ode.jacobian && ode.sparse_jacobian;
  const bool fused = !sparse && static_cast<bool>(ode.rhs_and_jacobian);
  LinearSolver solver(sparse);
  SparseMatrix identity;
  if (sparse) {
    identity.resize(n, n);
    identity.setIdentity();
  }

  for (Index k = 0; k < steps; ++k) {
    const double t = span.t0 + static_cast<double>(k) * dt;
    const double t_next = span.t0 + static_cast<double>(k + 1) * dt;
    if (cfg.scheme == Scheme::Rk4) {
      const Vector u0 = input(t);
      const Vector um = input(t + 0.5 * dt);
      const Vector u1 = input(t_next);
      const Vector k1 = ode.rhs(t, x, u0);
      const Vector k2 = ode.rhs(t + 0.5 * dt, x + 0.5 * dt * k1, um);
      const Vector k3 = ode.rhs(t + 0.5 * dt, x + 0.5 * dt * k2, um);
      const Vector k4 = ode.rhs(t_next, x + dt * k3, u1);
      x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } else {
      // Solve G(y) = y - x - dt f(t_m, (x + y)/2, u_m) = 0 by Newton.
      const double tm = t + 0.5 * dt;
      const Vector um = input(tm);
      // Linear extrapolation from the last step; explicit predictors are poor when stiff.
      Vector y = 2.0 * x - x_prev;
      bool converged = false;
      for (int it = 0; it < cfg.newton_max_iter; ++it) {
        const Vector mid = 0.5 * (x + y);
        Vector G;
        if (fused) {
          auto [f, Jf] = ode.rhs_and_jacobian(tm, mid, um);
          G = y - x - dt * f;
          if (!G.allFinite()) check_finite(G, tm);
          solver.factor_dense(Matrix::Identity(n, n) - (0.5 * dt) * Jf);
        } else {
          G = y - x - dt * ode.rhs(tm, mid, um);
          if (!G.allFinite()) check_finite(G, tm);
          if (sparse) {
            solver.factor_sparse(identity - (0.5 * dt) * ode.sparse_jacobian(tm, mid, um));
          } else {
            const Matrix Jf =
                ode.jacobian ? ode.jacobian(tm, mid, um) : fd_jacobian(ode, tm, mid, um);
            solver.factor_dense(Matrix::Identity(n, n) - (0.5 * dt) * Jf);
          }
        }
        const Vector delta = solver.solve(G);
        const double step = scaled_norm(delta);
        y -= delta;
        if (!y.allFinite()) check_finite(y, t_next);
        if (step <= cfg.newton_tol * (1.0 + scaled_norm(y))) {
          converged = true;
          break;
        }
      }
      if (!converged)
        throw Error(ErrorCode::Convergence,
                    fmt::format("Newton iteration did not converge in {} iterations at t = {}",
                                cfg.newton_max_iter, t_next));
      x_prev = x;
      x = std::move(y);
    }
    check_finite(x, t_next);
    record(k + 1, t_next, x);
  }
  return traj;
}

OdeSystem as_ode(const NlphSystem& sys) {
  OdeSystem ode;
  ode.dim = sys.dim();
  ode.ports = sys.ports();
  const SparseMatrix A = sys.A();
  const Matrix B = sys.B;
  const VectorFn grad = sys.grad;
  const std::string name = sys.name;
  const auto require_finite = [name](const Vector& g, const Vector& x) {
    if (!g.allFinite())
      throw Error(ErrorCode::Evaluation,
                  fmt::format("non-finite gradient of {} (|x|_inf = {})", name,
                              x.lpNorm<Eigen::Infinity>()));
  };
  ode.rhs = [grad, A, B, require_finite](double, const Vector& x, const Vector& u) -> Vector {
    const Vector g = grad(x);
    require_finite(g, x);
    return A * g + B * u;
  };
  ode.output = [grad, B](const Vector& x) -> Vector { return B.transpose() * grad(x); };
  if (sys.has_hessian()) {
    const SparseMatrixFn hess = sys.hess;
    if (sys.dim() > kSparseThreshold) {
      ode.sparse_jacobian = [hess, A](double, const Vector& x, const Vector&) -> SparseMatrix {
        return A * hess(x);
      };
    } else {
      const Matrix Ad(A);
      ode.jacobian = [hess, Ad](double, const Vector& x, const Vector&) -> Matrix {
        return Ad * hess(x);
      };
      if (sys.grad_and_flow_jacobian) {
        const GradJacobianFn gj = sys.grad_and_flow_jacobian;
        ode.rhs_and_jacobian = [gj, Ad, B, require_finite](double, const Vector& x,
                                                           const Vector& u) {
          GradJacobian e = gj(x);
          require_finite(e.grad, x);
          return std::pair<Vector, Matrix>(Ad * e.grad + B * u, std::move(e.flow_jacobian));
        };
      }
    }
  }
  return ode;
}

Trajectory simulate(const NlphSystem& sys, const InputFn& input, TimeSpan span,
                    const IntegratorConfig& cfg, const Vector& x0) {
  const Vector start = x0.size() == 0 ? Vector::Zero(sys.dim()) : x0;
  return integrate(as_ode(sys), start, input, span, cfg);
}

}  // namespace phred
