// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "phred/basis.hpp"
#include "phred/core.hpp"
#include "phred/integrate.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

namespace phred {

/// Counts nonlinear work done by a reduced gradient callback.
struct EvalCounter {
  std::atomic<std::uint64_t> gradient_calls{0};
  std::atomic<std::uint64_t> component_evaluations{0};

  void reset() {
    gradient_calls = 0;
    component_evaluations = 0;
  }
};

/// Reduced port-Hamiltonian system in coordinates x_r with lift x = V x_r.
/// `system` holds J_r, R_r, B_r and the reduced Hamiltonian callbacks.
struct ReducedSystem {
  NlphSystem system;
  Matrix V;
  Matrix W;
  Provenance provenance = Provenance::Custom;
  bool deim = false;
  std::shared_ptr<EvalCounter> counter;

  Index rank() const { return V.cols(); }
  std::string label() const;
  Matrix Jr() const { return Matrix(system.J); }
  Matrix Rr() const { return Matrix(system.R); }
  const Matrix& Br() const { return system.B; }
};

/// Reduced matrices W^T J W, W^T R W (re-symmetrized) and W^T B.
void project_matrices(const NlphSystem& sys, const Matrix& W, Matrix& Jr, Matrix& Rr, Matrix& Br);

/// Petrov-Galerkin reduction with the exactly lifted gradient V^T grad H(V x_r).
ReducedSystem project_ph(const NlphSystem& sys, const ReductionBasis& basis);

Vector init_reduced_state(const ReductionBasis& basis, const Vector& x0);

Trajectory simulate_reduced(const ReducedSystem& red, const InputFn& input, TimeSpan span,
                            const IntegratorConfig& cfg, const Vector& xr0 = Vector());

struct ErrorMetrics {
  double avg_rel_output_error = 0.0;
  double avg_rel_state_error = 0.0;
  double l2_output_error = 0.0;   // int |y - y_r|^2 dt
  double l2_state_error_q = 0.0;  // int |x - V x_r|_Q^2 dt
  Vector output_error;            // |y - y_r| per grid point
  Vector state_error;             // |x - V x_r|_Q per grid point
};

/// Throws Error(Comparison) when the grids differ.
ErrorMetrics error_metrics(const Trajectory& full, const Trajectory& reduced, const Matrix& V,
                           const WeightedMetric& metric);

}  // namespace phred
