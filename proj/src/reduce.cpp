// SPDX-License-Identifier: Apache-2.0
#include "phred/reduce.hpp"

#include "phred/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace phred {

std::string ReducedSystem::label() const {
  return fmt::format("{}{}", to_string(provenance), deim ? "-deim" : "");
}

void project_matrices(const NlphSystem& sys, const Matrix& W, Matrix& Jr, Matrix& Rr, Matrix& Br) {
  const Matrix JW = sys.J * W;
  const Matrix RW = sys.R * W;
  Jr = W.transpose() * JW;
  Rr = W.transpose() * RW;
  Jr = (0.5 * (Jr - Jr.transpose())).eval();
  Rr = (0.5 * (Rr + Rr.transpose())).eval();
  Br = W.transpose() * sys.B;
}

ReducedSystem project_ph(const NlphSystem& sys, const ReductionBasis& basis) {
  const Index n = sys.dim();
  if (basis.V.rows() != n || basis.W.rows() != n || basis.V.cols() != basis.W.cols())
    throw Error(ErrorCode::Structure,
                fmt::format("basis shapes {}x{} / {}x{} do not match n = {}", basis.V.rows(),
                            basis.V.cols(), basis.W.rows(), basis.W.cols(), n));
  Matrix Jr, Rr, Br;
  project_matrices(sys, basis.W, Jr, Rr, Br);

  ReducedSystem red;
  red.V = basis.V;
  red.W = basis.W;
  red.provenance = basis.provenance;
  red.counter = std::make_shared<EvalCounter>();
  NlphSystem& s = red.system;
  s.name = fmt::format("{} reduced r={}", sys.name, basis.rank());
  s.J = to_sparse(Jr);
  s.R = to_sparse(Rr);
  s.B = Br;

  const auto V = std::make_shared<const Matrix>(basis.V);
  const ScalarFn H = sys.hamiltonian;
  const VectorFn grad = sys.grad;
  const auto counter = red.counter;
  s.hamiltonian = [V, H](const Vector& xr) { return H(*V * xr); };
  s.grad = [V, grad, counter, n](const Vector& xr) -> Vector {
    counter->gradient_calls.fetch_add(1, std::memory_order_relaxed);
    counter->component_evaluations.fetch_add(n, std::memory_order_relaxed);
    return V->transpose() * grad(*V * xr);
  };
  if (sys.has_hessian()) {
    const SparseMatrixFn hess = sys.hess;
    s.hess = [V, hess](const Vector& xr) -> SparseMatrix {
      const Matrix HV = hess(*V * xr) * *V;
      Matrix Hr = V->transpose() * HV;
      Hr = (0.5 * (Hr + Hr.transpose())).eval();
      return Hr.sparseView(0.0, 0.0);
    };
    const auto AVt = std::make_shared<const Matrix>((Jr - Rr) * basis.V.transpose());
    s.grad_and_flow_jacobian = [V, AVt, grad, hess, counter, n](const Vector& xr) {
      counter->gradient_calls.fetch_add(1, std::memory_order_relaxed);
      counter->component_evaluations.fetch_add(n, std::memory_order_relaxed);
      const Vector x = *V * xr;
      return GradJacobian{V->transpose() * grad(x), *AVt * (hess(x) * *V)};
    };
  }
  return red;
}

Vector init_reduced_state(const ReductionBasis& basis, const Vector& x0) {
  return basis.W.transpose() * x0;
}

Trajectory simulate_reduced(const ReducedSystem& red, const InputFn& input, TimeSpan span,
                            const IntegratorConfig& cfg, const Vector& xr0) {
  return simulate(red.system, input, span, cfg, xr0);
}

ErrorMetrics error_metrics(const Trajectory& full, const Trajectory& reduced, const Matrix& V,
                           const WeightedMetric& metric) {
  const std::size_t N = full.times.size();
  if (reduced.times.size() != N)
    throw Error(ErrorCode::Comparison,
                fmt::format("time grids differ in length ({} vs {})", N, reduced.times.size()));
  for (std::size_t k = 0; k < N; ++k)
    if (std::abs(full.times[k] - reduced.times[k]) > 1e-12 * (1.0 + std::abs(full.times[k])))
      throw Error(ErrorCode::Comparison, fmt::format("time grids differ at index {}", k));
  if (reduced.states.cols() != V.cols() || full.states.cols() != V.rows())
    throw Error(ErrorCode::Comparison, "lift matrix does not match the trajectories");

  ErrorMetrics e;
  const Index K = static_cast<Index>(N);
  e.output_error.resize(K);
  e.state_error.resize(K);
  double sum_y = 0.0, sum_dy = 0.0, sum_x = 0.0, sum_dx = 0.0;
  for (Index k = 0; k < K; ++k) {
    const Vector x = full.states.row(k).transpose();
    const Vector dx = x - V * reduced.states.row(k).transpose();
    const double ny = full.outputs.row(k).norm();
    const double dy = (full.outputs.row(k) - reduced.outputs.row(k)).norm();
    const double nx = q_norm(metric, x);
    const double ex = q_norm(metric, dx);
    e.output_error(k) = dy;
    e.state_error(k) = ex;
    sum_y += ny;
    sum_dy += dy;
    sum_x += nx;
    sum_dx += ex;
  }
  e.avg_rel_output_error = sum_y > 0.0 ? sum_dy / sum_y : sum_dy;
  e.avg_rel_state_error = sum_x > 0.0 ? sum_dx / sum_x : sum_dx;
  e.l2_output_error = trapezoid(full.times, e.output_error.array().square().matrix());
  e.l2_state_error_q = trapezoid(full.times, e.state_error.array().square().matrix());
  return e;
}

}  // namespace phred
