// SPDX-License-Identifier: Apache-2.0
#include "phred/basis.hpp"

#include "phred/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <Eigen/SparseLU>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace phred {

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::Pod: return "pod";
    case Provenance::H2eps: return "h2eps";
    case Provenance::Hybrid: return "hybrid";
    case Provenance::Custom: return "custom";
  }
  return "custom";
}

SnapshotSet snapshots_from_trajectory(const NlphSystem& sys, const Trajectory& traj, Index stride,
                                      const WeightedMetric* split_weight) {
  if (stride < 1) throw Error(ErrorCode::Config, "snapshot stride must be at least 1");
  const Index total = static_cast<Index>(traj.times.size());
  const Index k = (total - 1) / stride + 1;
  SnapshotSet s;
  s.times.reserve(k);
  s.X.resize(sys.dim(), k);
  s.F.resize(sys.dim(), k);
  for (Index j = 0; j < k; ++j) {
    const Index row = j * stride;
    s.times.push_back(traj.times[row]);
    s.X.col(j) = traj.states.row(row).transpose();
    s.F.col(j) = sys.grad(s.X.col(j));
  }
  if (split_weight) s.G = s.F - split_weight->apply(s.X);
  return s;
}

SnapshotSet collect_snapshots(const NlphSystem& sys, const InputFn& input, TimeSpan span,
                              const IntegratorConfig& cfg, Index stride,
                              const WeightedMetric* split_weight) {
  return snapshots_from_trajectory(sys, simulate(sys, input, span, cfg), stride, split_weight);
}

PodResult pod_basis(const Matrix& S, Index r) {
  if (r < 1) throw Error(ErrorCode::Rank, "basis size must be positive");
  const Index kmax = std::min(S.rows(), S.cols());
  if (r > kmax)
    throw Error(ErrorCode::Rank,
                fmt::format("requested r = {} but the snapshot matrix is {}x{}; use r <= {}", r,
                            S.rows(), S.cols(), kmax));
  Eigen::BDCSVD<Matrix> svd(S, Eigen::ComputeThinU);
  PodResult out;
  out.singular_values = svd.singularValues();
  const double s1 = out.singular_values(0);
  if (!(s1 > 0.0) || out.singular_values(r - 1) < 1e-12 * s1) {
    Index rank = 0;
    while (rank < kmax && s1 > 0.0 && out.singular_values(rank) >= 1e-12 * s1) ++rank;
    throw Error(ErrorCode::Rank,
                fmt::format("requested r = {} exceeds the numerical rank {} of the snapshots; "
                            "use a smaller r",
                            r, rank));
  }
  out.basis = svd.matrixU().leftCols(r);
  return out;
}

double ReductionBasis::biorthogonality_defect() const {
  return (W.transpose() * V - Matrix::Identity(V.cols(), V.cols())).norm();
}

ReductionBasis biorthonormalize(const Matrix& V0, const Matrix& W0, Provenance provenance) {
  if (V0.rows() != W0.rows() || V0.cols() != W0.cols())
    throw Error(ErrorCode::Structure, "V and W must have identical shapes");
  const Index r = V0.cols();
  const Matrix M = W0.transpose() * V0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector sv = svd.singularValues();
  const double smin = sv(r - 1);
  if (!(smin > 0.0) || sv(0) / smin > 1e12)
    throw Error(ErrorCode::Orientation,
                fmt::format("W^T V is numerically singular (sigma_min = {:.3e}, cond = {:.3e}); "
                            "the trial and test subspaces are nearly orthogonal",
                            smin, smin > 0 ? sv(0) / smin : INFINITY));
  ReductionBasis b;
  b.provenance = provenance;
  b.sigma_min_before = smin;
  b.V = V0;
  b.W = M.partialPivLu().solve(W0.transpose()).transpose();
  // One refinement sweep removes the residual left by an ill-conditioned M.
  const Matrix M2 = b.W.transpose() * V0;
  if ((M2 - Matrix::Identity(r, r)).norm() > 1e-14)
    b.W = Matrix(M2.partialPivLu().solve(b.W.transpose())).transpose();
  return b;
}

Matrix q_orthonormalize(const Matrix& V0, const WeightedMetric& metric) {
  Matrix V = V0;
  // Cholesky QR applied twice for orthogonality at roundoff level.
  for (int pass = 0; pass < 2; ++pass) {
    Matrix gram = V.transpose() * metric.apply(V);
    gram = (0.5 * (gram + gram.transpose())).eval();
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all())
      throw Error(ErrorCode::Rank, "V^T Q V is not positive definite; the basis is rank deficient");
    V = Matrix(llt.matrixL().solve(V.transpose())).transpose();
  }
  return V;
}

ReductionBasis pod_ph_bases(const SnapshotSet& snapshots, Index r) {
  const Matrix V0 = pod_basis(snapshots.X, r).basis;
  const Matrix W0 = pod_basis(snapshots.F, r).basis;
  return biorthonormalize(V0, W0, Provenance::Pod);
}

SparseMatrix LinearPhModel::system_matrix() const { return SparseMatrix(J - R) * Q; }

LinearPhModel linearize(const NlphSystem& sys) {
  const Index n = sys.dim();
  const Vector zero = Vector::Zero(n);
  SparseMatrix Q;
  if (sys.has_hessian()) {
    Q = sys.hess(zero);
  } else {
    Q = to_sparse(fd_hessian(sys.grad, zero));
  }
  Q = 0.5 * (Q + SparseMatrix(Q.transpose()));
  Q.prune(0.0);
  Q.makeCompressed();
  LinearPhModel lin;
  lin.J = sys.J;
  lin.R = sys.R;
  lin.B = sys.B;
  lin.Q = Q;
  try {
    lin.metric = WeightedMetric::from_sparse(Q);
  } catch (const Error&) {
    throw Error(ErrorCode::Linearization,
                "Hessian at the origin is not positive definite; the origin is not a strict "
                "minimum of H");
  }
  return lin;
}

namespace {

using ComplexSparse = Eigen::SparseMatrix<Complex>;

ComplexSparse shifted_matrix(const SparseMatrix& AQ, Complex s) {
  const Index n = AQ.rows();
  ComplexSparse I(n, n);
  I.setIdentity();
  ComplexSparse M = s * I - AQ.cast<Complex>();
  M.makeCompressed();
  return M;
}

ComplexMatrix shifted_solve(const SparseMatrix& AQ, Complex s, const ComplexMatrix& rhs) {
  Eigen::SparseLU<ComplexSparse> lu;
  lu.compute(shifted_matrix(AQ, s));
  if (lu.info() != Eigen::Success)
    throw Error(ErrorCode::ShiftCollision,
                fmt::format("shift {}{:+}i is an eigenvalue of (J - R) Q", s.real(), s.imag()));
  ComplexMatrix X = lu.solve(rhs);
  const double res = (shifted_matrix(AQ, s) * X - rhs).norm();
  if (!X.allFinite() || res > 1e-6 * rhs.norm())
    throw Error(ErrorCode::ShiftCollision,
                fmt::format("shifted system at {}{:+}i is numerically singular", s.real(),
                            s.imag()));
  return X;
}

bool is_real_shift(Complex s) { return std::abs(s.imag()) <= 1e-12 * std::max(1.0, std::abs(s)); }

}  // namespace

ComplexMatrix transfer_eval(const LinearPhModel& lin, Complex s) {
  const ComplexMatrix Bc = lin.B.cast<Complex>();
  const ComplexMatrix X = shifted_solve(lin.system_matrix(), s, Bc);
  const Matrix QB = lin.metric.apply(lin.B);
  return QB.transpose().cast<Complex>() * X;
}

ComplexMatrix transfer_eval_dense(const Matrix& A, const Matrix& Q, const Matrix& B, Complex s) {
  const Index n = A.rows();
  const ComplexMatrix M = s * ComplexMatrix::Identity(n, n) - (A * Q).cast<Complex>();
  Eigen::PartialPivLU<ComplexMatrix> lu(M);
  const ComplexMatrix X = lu.solve(B.cast<Complex>());
  if (!X.allFinite())
    throw Error(ErrorCode::ShiftCollision, "shift is a pole of the reduced transfer function");
  return (Q * B).transpose().cast<Complex>() * X;
}

Matrix interpolatory_basis(const LinearPhModel& lin, const std::vector<Complex>& shifts,
                           const std::vector<ComplexVector>& directions) {
  const Index r = static_cast<Index>(shifts.size());
  if (directions.size() != shifts.size())
    throw Error(ErrorCode::Config, "need one tangent direction per shift");
  const Index n = lin.dim();
  const SparseMatrix AQ = lin.system_matrix();

  // Conjugate closure: each shift with positive imaginary part needs a
  // partner with the conjugate value.
  std::vector<bool> used(r, false);
  for (Index i = 0; i < r; ++i) {
    if (is_real_shift(shifts[i]) || shifts[i].imag() < 0.0) continue;
    bool found = false;
    for (Index j = 0; j < r && !found; ++j) {
      if (used[j] || is_real_shift(shifts[j]) || shifts[j].imag() > 0.0) continue;
      if (std::abs(shifts[j] - std::conj(shifts[i])) <= 1e-10 * std::abs(shifts[i])) {
        used[j] = true;
        found = true;
      }
    }
    if (!found)
      throw Error(ErrorCode::Config, "shift list is not closed under complex conjugation");
  }
  Index unmatched = 0;
  for (Index j = 0; j < r; ++j)
    if (!is_real_shift(shifts[j]) && shifts[j].imag() < 0.0 && !used[j]) ++unmatched;
  if (unmatched > 0)
    throw Error(ErrorCode::Config, "shift list is not closed under complex conjugation");

  Matrix V(n, r);
  Index col = 0;
  for (Index i = 0; i < r; ++i) {
    const Complex s = shifts[i];
    if (!is_real_shift(s) && s.imag() < 0.0) continue;
    if (directions[i].size() != lin.B.cols())
      throw Error(ErrorCode::Config, "tangent direction has the wrong length");
    const ComplexVector rhs = lin.B.cast<Complex>() * directions[i];
    const ComplexVector v = shifted_solve(AQ, s, rhs);
    if (is_real_shift(s)) {
      const Vector re = v.real();
      const Vector im = v.imag();
      V.col(col++) = re.norm() >= im.norm() ? re : im;
    } else {
      V.col(col++) = v.real();
      V.col(col++) = v.imag();
    }
  }

  Matrix Vn = V;
  for (Index j = 0; j < r; ++j) {
    const double nrm = Vn.col(j).norm();
    if (!(nrm > 0.0))
      throw Error(ErrorCode::DegenerateDirections, fmt::format("interpolation column {} is zero", j));
    Vn.col(j) /= nrm;
  }
  Eigen::JacobiSVD<Matrix> svd(Vn);
  const Vector sv = svd.singularValues();
  if (sv(r - 1) < 1e-12 * sv(0))
    throw Error(ErrorCode::DegenerateDirections,
                fmt::format("interpolation basis lost rank after realification "
                            "(sigma_min / sigma_max = {:.3e})",
                            sv(r - 1) / sv(0)));
  return V;
}

namespace {

std::vector<std::size_t> sorted_order(const std::vector<Complex>& s) {
  std::vector<std::size_t> idx(s.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (s[a].real() != s[b].real()) return s[a].real() < s[b].real();
    return s[a].imag() < s[b].imag();
  });
  return idx;
}

std::vector<Complex> sorted(const std::vector<Complex>& s) {
  std::vector<Complex> out;
  for (std::size_t i : sorted_order(s)) out.push_back(s[i]);
  return out;
}

double relative_change(const std::vector<Complex>& a, const std::vector<Complex>& b) {
  const auto sa = sorted(a);
  const auto sb = sorted(b);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    num += std::norm(sa[i] - sb[i]);
    den += std::norm(sb[i]);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

struct ProjectedLinear {
  Matrix V, W, Jr, Rr, Br;
};

ProjectedLinear project_linear(const LinearPhModel& lin, const std::vector<Complex>& shifts,
                               const std::vector<ComplexVector>& dirs) {
  ProjectedLinear p;
  p.V = q_orthonormalize(interpolatory_basis(lin, shifts, dirs), lin.metric);
  p.W = lin.metric.apply(p.V);
  const Matrix JW = lin.J * p.W;
  const Matrix RW = lin.R * p.W;
  p.Jr = p.W.transpose() * JW;
  p.Rr = p.W.transpose() * RW;
  p.Jr = (0.5 * (p.Jr - p.Jr.transpose())).eval();
  p.Rr = (0.5 * (p.Rr + p.Rr.transpose())).eval();
  p.Br = p.W.transpose() * lin.B;
  return p;
}

ComplexVector normalized_direction(const ComplexVector& b, Index m) {
  if (m == 1) return ComplexVector::Ones(1);
  const double nrm = b.norm();
  if (!(nrm > 1e-300)) {
    ComplexVector e = ComplexVector::Zero(m);
    e(0) = 1.0;
    return e;
  }
  return b / nrm;
}

}  // namespace

void default_h2_initialization(const LinearPhModel& lin, Index r, std::vector<Complex>& shifts,
                               std::vector<ComplexVector>& directions) {
  const Index n = lin.dim();
  const Index m = lin.B.cols();
  const SparseMatrix AQ = lin.system_matrix();
  // Deterministic start vector.
  Vector x(n);
  for (Index i = 0; i < n; ++i) x(i) = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
  x.normalize();
  double hi = 0.0;
  for (int it = 0; it < 60; ++it) {
    Vector y = AQ * x;
    hi = y.norm();
    if (!(hi > 0.0)) break;
    x = y / hi;
  }
  double lo = 0.0;
  Eigen::SparseLU<SparseMatrix> lu;
  lu.compute(AQ);
  if (lu.info() == Eigen::Success) {
    for (Index i = 0; i < n; ++i) x(i) = 1.0 + 0.5 * std::cos(2.0 + static_cast<double>(i));
    x.normalize();
    double inv = 0.0;
    for (int it = 0; it < 60; ++it) {
      Vector y = lu.solve(x);
      inv = y.norm();
      if (!(inv > 0.0) || !std::isfinite(inv)) break;
      x = y / inv;
    }
    if (inv > 0.0 && std::isfinite(inv)) lo = 1.0 / inv;
  }
  if (!(hi > 0.0)) hi = 1.0;
  if (!(lo > 0.0) || lo > hi) lo = 1e-3 * hi;

  shifts.clear();
  directions.clear();
  for (Index i = 0; i < r; ++i) {
    const double t = r == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(r - 1);
    shifts.emplace_back(lo * std::pow(hi / lo, t), 0.0);
    ComplexVector b = ComplexVector::Zero(m);
    b(i % m) = 1.0;
    directions.push_back(b);
  }
}

H2Result h2eps_ph_bases(const LinearPhModel& lin, Index r, const H2Options& opts) {
  if (r < 1 || r > lin.dim())
    throw Error(ErrorCode::Rank, fmt::format("r = {} outside [1, {}]", r, lin.dim()));
  const Index m = lin.B.cols();
  std::vector<Complex> shifts = opts.init_shifts;
  std::vector<ComplexVector> dirs = opts.init_directions;
  if (shifts.empty()) default_h2_initialization(lin, r, shifts, dirs);
  if (static_cast<Index>(shifts.size()) != r || dirs.size() != shifts.size())
    throw Error(ErrorCode::Config, "initial shifts and directions must have r entries");

  H2Result out;
  std::vector<Complex> best_shifts = shifts;
  std::vector<ComplexVector> best_dirs = dirs;
  double best_change = INFINITY;

  for (int it = 1; it <= opts.max_iter; ++it) {
    const ProjectedLinear p = project_linear(lin, shifts, dirs);
    const Matrix Ar = p.Jr - p.Rr;
    Eigen::EigenSolver<Matrix> es(Ar.transpose());
    if (es.info() != Eigen::Success)
      throw Error(ErrorCode::Convergence, "reduced eigenvalue problem failed");
    const ComplexVector lambda = es.eigenvalues();
    const ComplexMatrix Z = es.eigenvectors();

    std::vector<Complex> next(r);
    std::vector<ComplexVector> next_dirs(r);
    for (Index i = 0; i < r; ++i) {
      const Complex l = lambda(i);
      if (l.real() > 0.0)
        out.log.warnings.push_back(
            fmt::format("iteration {}: unstable reduced eigenvalue {}{:+}i reflected", it,
                        l.real(), l.imag()));
      // Mirror image, kept in the open right half plane.
      Complex s(std::abs(l.real()), -l.imag());
      if (std::abs(s.imag()) <= 1e-12 * std::max(1.0, std::abs(s))) s = Complex(s.real(), 0.0);
      next[i] = s;
      next_dirs[i] = normalized_direction(p.Br.transpose().cast<Complex>() * Z.col(i), m);
    }
    const double change = relative_change(next, shifts);
    out.log.shifts.push_back(sorted(next));
    out.log.changes.push_back(change);
    out.log.iterations = it;
    shifts = std::move(next);
    dirs = std::move(next_dirs);
    if (change < best_change) {
      best_change = change;
      best_shifts = shifts;
      best_dirs = dirs;
    }
    if (change < opts.shift_tol) {
      out.log.converged = true;
      break;
    }
  }
  if (!out.log.converged) {
    out.log.warnings.push_back(fmt::format(
        "shift iteration did not converge in {} iterations; using the iterate with the "
        "smallest change ({:.3e})",
        opts.max_iter, best_change));
    spdlog::warn("{}", out.log.warnings.back());
    shifts = best_shifts;
    dirs = best_dirs;
  }

  const ProjectedLinear p = project_linear(lin, shifts, dirs);
  out.basis.V = p.V;
  out.basis.W = p.W;
  out.basis.provenance = Provenance::H2eps;
  Eigen::JacobiSVD<Matrix> svd(p.W.transpose() * p.V);
  out.basis.sigma_min_before = svd.singularValues()(r - 1);
  out.basis.warnings = out.log.warnings;
  out.shifts = shifts;
  out.directions = dirs;
  return out;
}

Matrix orth(const Matrix& S, double rel_tol) {
  Matrix Sn = S;
  for (Index j = 0; j < Sn.cols(); ++j) {
    const double nrm = Sn.col(j).norm();
    if (nrm > 0.0) Sn.col(j) /= nrm;
  }
  Eigen::BDCSVD<Matrix> svd(Sn, Eigen::ComputeThinU);
  const Vector sv = svd.singularValues();
  Index k = 0;
  while (k < sv.size() && sv(0) > 0.0 && sv(k) > rel_tol * sv(0)) ++k;
  return svd.matrixU().leftCols(k);
}

ReductionBasis hybrid_bases(const ReductionBasis& pod, const ReductionBasis& h2) {
  if (pod.V.rows() != h2.V.rows())
    throw Error(ErrorCode::Structure, "hybrid components live in different state spaces");
  const Index r = pod.rank() + h2.rank();
  if (r > pod.V.rows())
    throw Error(ErrorCode::Rank, fmt::format("hybrid size {} exceeds n = {}", r, pod.V.rows()));
  Matrix catV(pod.V.rows(), r), catW(pod.W.rows(), r);
  catV << pod.V, h2.V;
  catW << pod.W, h2.W;
  Matrix Vt = orth(catV);
  Matrix Wt = orth(catW);
  const Index achieved = std::min(Vt.cols(), Wt.cols());
  std::vector<std::string> warnings;
  if (achieved < r) {
    warnings.push_back(fmt::format(
        "concatenated hybrid bases have numerical rank {} < {}; truncated", achieved, r));
    spdlog::warn("{}", warnings.back());
  }
  ReductionBasis b =
      biorthonormalize(Vt.leftCols(achieved), Wt.leftCols(achieved), Provenance::Hybrid);
  b.warnings = std::move(warnings);
  return b;
}

}  // namespace phred
