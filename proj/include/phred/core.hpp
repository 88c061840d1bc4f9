// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace phred {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

using ScalarFn = std::function<double(const Vector&)>;
using VectorFn = std::function<Vector(const Vector&)>;
using SparseMatrixFn = std::function<SparseMatrix(const Vector&)>;
using MatrixFn = std::function<Matrix(const Vector&)>;

struct GradJacobian {
  Vector grad;
  Matrix flow_jacobian;  // (J - R) * hess H
};
using GradJacobianFn = std::function<GradJacobian(const Vector&)>;

/// Model-native quadratic split H(x) = 1/2 x^T Q x + h(x) with per-component
/// access to grad h. Component i of grad h reads only the entries of x listed
/// by stencil(i); `component` receives those entries in stencil order and
/// writes the partial derivatives of grad_i h with respect to them into
/// `dvals` when it is non-empty.
struct NativeSplit {
  SparseMatrix Q;
  ScalarFn h;
  VectorFn grad;
  std::function<std::vector<Index>(Index)> stencil;
  std::function<double(Index, std::span<const double>, std::span<double>)> component;
};

/// Full-order system  x' = (J - R) grad H(x) + B u,  y = B^T grad H(x).
///
/// J and R are stored sparse; small or reduced systems simply carry dense
/// patterns. `hess` and `split` are optional.
struct NlphSystem {
  std::string name;
  SparseMatrix J;
  SparseMatrix R;
  Matrix B;
  ScalarFn hamiltonian;
  VectorFn grad;
  SparseMatrixFn hess;
  GradJacobianFn grad_and_flow_jacobian;  // optional, one pass; for small Newton solves
  std::optional<NativeSplit> split;

  Index dim() const { return B.rows(); }
  Index ports() const { return B.cols(); }
  bool has_hessian() const { return static_cast<bool>(hess); }
  SparseMatrix A() const { return J - R; }
};

struct StructureReport {
  static constexpr double skew_tol = 1e-12;
  static constexpr double symmetry_tol = 1e-12;
  static constexpr double psd_tol = 1e-10;

  double skew_defect = 0.0;      // ||(J + J^T)/2|| / ||J||
  double symmetry_defect = 0.0;  // ||(R - R^T)/2|| / ||R||
  double min_eig_R = 0.0;
  double norm_R = 0.0;
  bool dims_ok = true;
  bool skew_ok = true;
  bool symmetry_ok = true;
  bool psd_ok = true;

  bool pass() const { return dims_ok && skew_ok && symmetry_ok && psd_ok; }
  std::string summary() const;
};

/// Throws Error(Structure) naming the matrix whose dimensions disagree.
StructureReport validate_structure(const NlphSystem& sys);
StructureReport validate_matrices(const Matrix& J, const Matrix& R, const Matrix& B);

Vector eval_dynamics(const NlphSystem& sys, const Vector& x, const Vector& u);
Vector eval_output(const NlphSystem& sys, const Vector& x);

struct Trajectory {
  std::vector<double> times;
  Matrix states;   // (N+1) x n
  Matrix outputs;  // (N+1) x m
  Matrix inputs;   // (N+1) x m

  Index steps() const { return static_cast<Index>(times.size()) - 1; }
  Vector state(Index k) const { return states.row(k).transpose(); }
};

/// min over grid points t1 of  int_0^t1 y^T u dt - (H(x(t1)) - H(x(0))).
double dissipation_margin(const Trajectory& traj, const ScalarFn& hamiltonian);
double dissipation_margin(const Trajectory& traj, const NlphSystem& sys);

/// Composite trapezoid rule for samples f(t_k) on the grid `times`.
double trapezoid(const std::vector<double>& times, const Vector& values);

/// Symmetric positive definite weight Q with its Cholesky factor Q = L L^T.
/// Diagonal weights use elementwise kernels; sparse weights are factored
/// without reordering so L stays the plain Cholesky factor.
class WeightedMetric {
 public:
  enum class Kind { Diagonal, Dense, Sparse };

  WeightedMetric() = default;

  static WeightedMetric identity(Index n);
  static WeightedMetric diagonal(const Vector& d);
  static WeightedMetric dense(const Matrix& Q);
  /// Diagonal representation when Q has no off-diagonal entries, sparse
  /// Cholesky otherwise.
  static WeightedMetric from_sparse(const SparseMatrix& Q);

  Index dim() const { return n_; }
  Kind kind() const { return kind_; }
  bool is_diagonal() const { return kind_ == Kind::Diagonal; }

  Matrix matrix() const;
  SparseMatrix sparse() const;
  Matrix apply(const Matrix& X) const;                   // Q X
  Matrix solve(const Matrix& X) const;                   // Q^{-1} X
  Matrix factor_transpose_apply(const Matrix& X) const;  // L^T X
  Matrix factor_solve(const Matrix& X) const;            // L^{-1} X
  Matrix factor_transpose_solve(const Matrix& X) const;  // L^{-T} X

  double inner(const Vector& x, const Vector& z) const;

 private:
  Kind kind_ = Kind::Diagonal;
  Index n_ = 0;
  Vector diag_;
  Vector sqrt_diag_;
  Matrix Q_;
  Matrix L_;
  SparseMatrix Qs_;
  SparseMatrix Ls_;
};

double q_norm(const WeightedMetric& metric, const Vector& x);
/// Largest singular value of L^T M L^{-T}.
double q_op_norm(const WeightedMetric& metric, const Matrix& M);
/// Largest eigenvalue of the symmetric part of M in the Q geometry.
double q_log_norm(const WeightedMetric& metric, const Matrix& M);

/// Dense symmetric Hessian by central differences of `grad`.
Matrix fd_hessian(const VectorFn& grad, const Vector& x, double h = 1e-6);

/// Sparse matrix with the entries of a dense matrix (zeros dropped).
SparseMatrix to_sparse(const Matrix& M);

}  // namespace phred
