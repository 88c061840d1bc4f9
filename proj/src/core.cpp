// SPDX-License-Identifier: Apache-2.0
#include "phred/core.hpp"

#include "phred/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/SparseCholesky>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace phred {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Structure: return "structure";
    case ErrorCode::Evaluation: return "evaluation";
    case ErrorCode::Rank: return "rank";
    case ErrorCode::Orientation: return "orientation";
    case ErrorCode::ShiftCollision: return "shift-collision";
    case ErrorCode::DegenerateDirections: return "degenerate-directions";
    case ErrorCode::Linearization: return "linearization";
    case ErrorCode::Convergence: return "convergence";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::Comparison: return "comparison";
    case ErrorCode::Estimation: return "estimation";
    case ErrorCode::Selection: return "selection";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

std::string StructureReport::summary() const {
  return fmt::format("{} skew={:.3e} sym={:.3e} min_eig_R={:.3e} |R|={:.3e}",
                     pass() ? "PASS" : "FAIL", skew_defect, symmetry_defect, min_eig_R,
                     norm_R);
}

namespace {

double spectral_norm_sym(const Matrix& S) {
  if (S.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double spectral_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(M);
  return svd.singularValues()(0);
}

}  // namespace

StructureReport validate_matrices(const Matrix& J, const Matrix& R, const Matrix& B) {
  const Index n = B.rows();
  StructureReport rep;
  rep.dims_ok = J.rows() == n && J.cols() == n && R.rows() == n && R.cols() == n && B.cols() > 0;
  if (!rep.dims_ok) {
    rep.skew_ok = rep.symmetry_ok = rep.psd_ok = false;
    return rep;
  }
  const double nJ = spectral_norm(J);
  rep.skew_defect = nJ > 0 ? spectral_norm_sym(0.5 * (J + J.transpose())) / nJ : 0.0;
  const Matrix Rs = 0.5 * (R + R.transpose());
  rep.norm_R = spectral_norm_sym(Rs);
  rep.symmetry_defect = rep.norm_R > 0 ? spectral_norm(0.5 * (R - R.transpose())) / rep.norm_R : 0.0;
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(Rs, Eigen::EigenvaluesOnly);
    rep.min_eig_R = es.eigenvalues()(0);
  }
  rep.skew_ok = rep.skew_defect <= StructureReport::skew_tol;
  rep.symmetry_ok = rep.symmetry_defect <= StructureReport::symmetry_tol;
  rep.psd_ok = rep.min_eig_R >= -StructureReport::psd_tol * rep.norm_R;
  return rep;
}

StructureReport validate_structure(const NlphSystem& sys) {
  const Index n = sys.dim();
  if (sys.J.rows() != n || sys.J.cols() != n)
    throw Error(ErrorCode::Structure, fmt::format("J is {}x{}, expected {}x{}", sys.J.rows(),
                                                  sys.J.cols(), n, n));
  if (sys.R.rows() != n || sys.R.cols() != n)
    throw Error(ErrorCode::Structure, fmt::format("R is {}x{}, expected {}x{}", sys.R.rows(),
                                                  sys.R.cols(), n, n));
  if (n > 2500) {
    // Too large for dense eigensolves: Frobenius-relative defects and a
    // Gershgorin lower bound for the smallest eigenvalue of R.
    StructureReport rep;
    const double nJ = sys.J.norm();
    rep.skew_defect = nJ > 0 ? SparseMatrix(sys.J + SparseMatrix(sys.J.transpose())).norm() / nJ : 0;
    rep.norm_R = sys.R.norm();
    rep.symmetry_defect =
        rep.norm_R > 0 ? SparseMatrix(sys.R - SparseMatrix(sys.R.transpose())).norm() / rep.norm_R
                       : 0;
    Vector centre = Vector::Zero(n);
    Vector radius = Vector::Zero(n);
    for (Index k = 0; k < sys.R.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(sys.R, k); it; ++it) {
        if (it.row() == it.col())
          centre(it.row()) += it.value();
        else
          radius(it.row()) += std::abs(it.value());
      }
    rep.min_eig_R = (centre - radius).minCoeff();
    rep.skew_ok = rep.skew_defect <= StructureReport::skew_tol;
    rep.symmetry_ok = rep.symmetry_defect <= StructureReport::symmetry_tol;
    rep.psd_ok = rep.min_eig_R >= -StructureReport::psd_tol * rep.norm_R;
    return rep;
  }
  return validate_matrices(Matrix(sys.J), Matrix(sys.R), sys.B);
}

namespace {

Vector checked_grad(const NlphSystem& sys, const Vector& x) {
  Vector g = sys.grad(x);
  if (!g.allFinite()) {
    const Index shown = std::min<Index>(x.size(), 6);
    throw Error(ErrorCode::Evaluation,
                fmt::format("non-finite gradient of {} at x = [{}{}]", sys.name,
                            fmt::join(x.data(), x.data() + shown, ", "),
                            x.size() > shown ? ", ..." : ""));
  }
  return g;
}

}  // namespace

Vector eval_dynamics(const NlphSystem& sys, const Vector& x, const Vector& u) {
  const Vector g = checked_grad(sys, x);
  return sys.J * g - sys.R * g + sys.B * u;
}

Vector eval_output(const NlphSystem& sys, const Vector& x) {
  return sys.B.transpose() * checked_grad(sys, x);
}

double trapezoid(const std::vector<double>& times, const Vector& values) {
  double acc = 0.0;
  for (std::size_t k = 1; k < times.size(); ++k)
    acc += 0.5 * (times[k] - times[k - 1]) * (values(k) + values(k - 1));
  return acc;
}

double dissipation_margin(const Trajectory& traj, const ScalarFn& hamiltonian) {
  const Index N = static_cast<Index>(traj.times.size());
  if (N == 0) return 0.0;
  const double H0 = hamiltonian(traj.state(0));
  double work = 0.0;
  double margin = 0.0;  // t1 = t0 contributes exactly zero
  double prev_power = traj.outputs.row(0).dot(traj.inputs.row(0));
  for (Index k = 1; k < N; ++k) {
    const double power = traj.outputs.row(k).dot(traj.inputs.row(k));
    work += 0.5 * (traj.times[k] - traj.times[k - 1]) * (power + prev_power);
    prev_power = power;
    margin = std::min(margin, work - (hamiltonian(traj.state(k)) - H0));
  }
  return margin;
}

double dissipation_margin(const Trajectory& traj, const NlphSystem& sys) {
  return dissipation_margin(traj, sys.hamiltonian);
}

// ---------------------------------------------------------------------------

WeightedMetric WeightedMetric::identity(Index n) { return diagonal(Vector::Ones(n)); }

WeightedMetric WeightedMetric::diagonal(const Vector& d) {
  if (!(d.array() > 0.0).all() || !d.allFinite())
    throw Error(ErrorCode::Linearization, "diagonal weight is not positive definite");
  WeightedMetric m;
  m.kind_ = Kind::Diagonal;
  m.n_ = d.size();
  m.diag_ = d;
  m.sqrt_diag_ = d.cwiseSqrt();
  return m;
}

WeightedMetric WeightedMetric::dense(const Matrix& Q) {
  if (Q.rows() != Q.cols()) throw Error(ErrorCode::Structure, "weight matrix is not square");
  const double scale = std::max(Q.cwiseAbs().maxCoeff(), 1e-300);
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw Error(ErrorCode::Linearization, "weight matrix is not symmetric");
  WeightedMetric m;
  m.kind_ = Kind::Dense;
  m.n_ = Q.rows();
  m.Q_ = 0.5 * (Q + Q.transpose());
  Eigen::LLT<Matrix> llt(m.Q_);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::Linearization, "weight matrix is not positive definite");
  m.L_ = llt.matrixL();
  return m;
}

WeightedMetric WeightedMetric::from_sparse(const SparseMatrix& Q) {
  if (Q.rows() != Q.cols()) throw Error(ErrorCode::Structure, "weight matrix is not square");
  bool diag = true;
  for (Index k = 0; k < Q.outerSize() && diag; ++k)
    for (SparseMatrix::InnerIterator it(Q, k); it; ++it)
      if (it.row() != it.col() && it.value() != 0.0) {
        diag = false;
        break;
      }
  if (diag) return diagonal(Vector(Q.diagonal()));

  const SparseMatrix Qt = Q.transpose();
  const double scale = std::max(Q.norm(), 1e-300);
  if (SparseMatrix(Q - Qt).norm() > 1e-12 * scale)
    throw Error(ErrorCode::Linearization, "weight matrix is not symmetric");
  WeightedMetric m;
  m.kind_ = Kind::Sparse;
  m.n_ = Q.rows();
  m.Qs_ = 0.5 * (Q + Qt);
  m.Qs_.makeCompressed();
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> llt(m.Qs_);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::Linearization, "weight matrix is not positive definite");
  m.Ls_ = llt.matrixL();
  m.Ls_.makeCompressed();
  return m;
}

Matrix WeightedMetric::matrix() const {
  switch (kind_) {
    case Kind::Diagonal: return diag_.asDiagonal();
    case Kind::Dense: return Q_;
    case Kind::Sparse: return Matrix(Qs_);
  }
  return {};
}

SparseMatrix WeightedMetric::sparse() const {
  switch (kind_) {
    case Kind::Diagonal: {
      SparseMatrix S(n_, n_);
      S.reserve(Eigen::VectorXi::Ones(n_));
      for (Index i = 0; i < n_; ++i) S.insert(i, i) = diag_(i);
      S.makeCompressed();
      return S;
    }
    case Kind::Dense: return to_sparse(Q_);
    case Kind::Sparse: return Qs_;
  }
  return {};
}

Matrix WeightedMetric::apply(const Matrix& X) const {
  switch (kind_) {
    case Kind::Diagonal: return diag_.asDiagonal() * X;
    case Kind::Dense: return Q_ * X;
    case Kind::Sparse: return Qs_ * X;
  }
  return {};
}

Matrix WeightedMetric::solve(const Matrix& X) const {
  if (kind_ == Kind::Diagonal) return diag_.cwiseInverse().asDiagonal() * X;
  return factor_transpose_solve(factor_solve(X));
}

Matrix WeightedMetric::factor_transpose_apply(const Matrix& X) const {
  switch (kind_) {
    case Kind::Diagonal: return sqrt_diag_.asDiagonal() * X;
    case Kind::Dense: return L_.transpose().triangularView<Eigen::Upper>() * X;
    case Kind::Sparse: return Ls_.transpose() * X;
  }
  return {};
}

Matrix WeightedMetric::factor_solve(const Matrix& X) const {
  switch (kind_) {
    case Kind::Diagonal: return sqrt_diag_.cwiseInverse().asDiagonal() * X;
    case Kind::Dense: return L_.triangularView<Eigen::Lower>().solve(X);
    case Kind::Sparse: return Ls_.triangularView<Eigen::Lower>().solve(X);
  }
  return {};
}

Matrix WeightedMetric::factor_transpose_solve(const Matrix& X) const {
  switch (kind_) {
    case Kind::Diagonal: return sqrt_diag_.cwiseInverse().asDiagonal() * X;
    case Kind::Dense: return L_.transpose().triangularView<Eigen::Upper>().solve(X);
    case Kind::Sparse: return Ls_.transpose().triangularView<Eigen::Upper>().solve(X);
  }
  return {};
}

double WeightedMetric::inner(const Vector& x, const Vector& z) const {
  switch (kind_) {
    case Kind::Diagonal: return (x.array() * diag_.array() * z.array()).sum();
    case Kind::Dense: return x.dot(Q_ * z);
    case Kind::Sparse: return x.dot(Qs_ * z);
  }
  return 0.0;
}

double q_norm(const WeightedMetric& metric, const Vector& x) {
  return std::sqrt(std::max(metric.inner(x, x), 0.0));
}

namespace {

// L^T M L^{-T}
Matrix congruence(const WeightedMetric& metric, const Matrix& M) {
  const Matrix LtM = metric.factor_transpose_apply(M);
  return metric.factor_solve(LtM.transpose()).transpose();
}

}  // namespace

double q_op_norm(const WeightedMetric& metric, const Matrix& M) {
  if (M.size() == 0) return 0.0;
  return spectral_norm(congruence(metric, M));
}

double q_log_norm(const WeightedMetric& metric, const Matrix& M) {
  const Matrix C = congruence(metric, M);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (C + C.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

Matrix fd_hessian(const VectorFn& grad, const Vector& x, double h) {
  const Index n = x.size();
  Matrix H(n, n);
  Vector xp = x;
  for (Index j = 0; j < n; ++j) {
    const double step = h * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + step;
    const Vector gp = grad(xp);
    xp(j) = x(j) - step;
    const Vector gm = grad(xp);
    xp(j) = x(j);
    H.col(j) = (gp - gm) / (2.0 * step);
  }
  return 0.5 * (H + H.transpose());
}

SparseMatrix to_sparse(const Matrix& M) { return M.sparseView(0.0, 0.0); }

}  // namespace phred
