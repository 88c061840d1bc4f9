// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "phred/core.hpp"
#include "phred/integrate.hpp"

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace phred {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

struct SnapshotSet {
  std::vector<double> times;
  Matrix X;  // n x k states
  Matrix F;  // n x k gradients of H
  Matrix G;  // n x k gradients of the nonlinear remainder (empty without a split)

  Index count() const { return X.cols(); }
  bool has_remainder() const { return G.size() > 0; }
};

/// Subsamples a trajectory every `stride` steps. With a weight Q the
/// remainder snapshots G = F - Q X are filled as well.
SnapshotSet snapshots_from_trajectory(const NlphSystem& sys, const Trajectory& traj, Index stride,
                                      const WeightedMetric* split_weight = nullptr);

SnapshotSet collect_snapshots(const NlphSystem& sys, const InputFn& input, TimeSpan span,
                              const IntegratorConfig& cfg, Index stride,
                              const WeightedMetric* split_weight = nullptr);

struct PodResult {
  Matrix basis;
  Vector singular_values;
};

/// Leading r left singular vectors. Throws Error(Rank) when sigma_r / sigma_1
/// falls below 1e-12.
PodResult pod_basis(const Matrix& S, Index r);

enum class Provenance { Pod, H2eps, Hybrid, Custom };
const char* to_string(Provenance p);

struct ReductionBasis {
  Matrix V;
  Matrix W;
  Provenance provenance = Provenance::Custom;
  double sigma_min_before = 1.0;  // smallest singular value of W0^T V0
  std::vector<std::string> warnings;

  Index rank() const { return V.cols(); }
  double biorthogonality_defect() const;
};

/// Keeps V = V0 and sets W = W0 (W0^T V0)^{-T}. Throws Error(Orientation)
/// when W0^T V0 has condition number above 1e12.
ReductionBasis biorthonormalize(const Matrix& V0, const Matrix& W0,
                                Provenance provenance = Provenance::Custom);

/// V0 R^{-1} with V0^T Q V0 = R^T R. Throws Error(Rank) if the Cholesky fails.
Matrix q_orthonormalize(const Matrix& V0, const WeightedMetric& metric);

ReductionBasis pod_ph_bases(const SnapshotSet& snapshots, Index r);

struct LinearPhModel {
  SparseMatrix J;
  SparseMatrix R;
  Matrix B;
  SparseMatrix Q;
  WeightedMetric metric;

  Index dim() const { return B.rows(); }
  /// (J - R) Q
  SparseMatrix system_matrix() const;
};

/// Hessian of H at the origin (finite differences when no Hessian callback
/// exists). Throws Error(Linearization) when it is not positive definite.
LinearPhModel linearize(const NlphSystem& sys);

/// B^T Q (sI - (J - R) Q)^{-1} B. Throws Error(ShiftCollision) near a pole.
ComplexMatrix transfer_eval(const LinearPhModel& lin, Complex s);

/// Transfer function of a small dense realization  B^T Q (sI - A Q)^{-1} B.
ComplexMatrix transfer_eval_dense(const Matrix& A, const Matrix& Q, const Matrix& B, Complex s);

/// Real basis spanning (s_i I - (J - R) Q)^{-1} B b_i. Conjugate pairs
/// contribute their real and imaginary parts; the list must be closed under
/// conjugation (directions conjugated alongside).
Matrix interpolatory_basis(const LinearPhModel& lin, const std::vector<Complex>& shifts,
                           const std::vector<ComplexVector>& directions);

struct H2Options {
  int max_iter = 100;
  double shift_tol = 1e-6;
  std::vector<Complex> init_shifts;
  std::vector<ComplexVector> init_directions;
};

struct IterationLog {
  std::vector<std::vector<Complex>> shifts;  // per iteration, sorted
  std::vector<double> changes;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

struct H2Result {
  ReductionBasis basis;
  IterationLog log;
  std::vector<Complex> shifts;
  std::vector<ComplexVector> directions;
};

/// Log-spaced real shifts between the smallest and largest eigenvalue
/// magnitudes of (J - R) Q, estimated by power and inverse power iteration;
/// directions cycle the input unit vectors.
void default_h2_initialization(const LinearPhModel& lin, Index r, std::vector<Complex>& shifts,
                               std::vector<ComplexVector>& directions);

H2Result h2eps_ph_bases(const LinearPhModel& lin, Index r, const H2Options& opts = {});

/// Orthonormal bases of [V_pod V_h2] and [W_pod W_h2], truncated to
/// numerical rank (sigma_k / sigma_1 > 1e-10), then biorthonormalized.
ReductionBasis hybrid_bases(const ReductionBasis& pod, const ReductionBasis& h2);

/// Orthonormal basis of the range of S truncated at relative tolerance.
Matrix orth(const Matrix& S, double rel_tol = 1e-10);

}  // namespace phred
