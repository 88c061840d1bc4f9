// SPDX-License-Identifier: Apache-2.0
#include "phred/deim.hpp"

#include "phred/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <memory>
#include <unordered_map>

namespace phred {

HamiltonianSplit build_split(const NlphSystem& sys, const SparseMatrix& Q) {
  HamiltonianSplit s;
  s.Q = Q;
  s.metric = WeightedMetric::from_sparse(Q);
  s.hess_full = sys.hess;
  const Index n = sys.dim();

  bool native = false;
  if (sys.split) {
    const SparseMatrix& Qm = sys.split->Q;
    native = Qm.rows() == Q.rows() && Qm.cols() == Q.cols() &&
             SparseMatrix(Qm - Q).norm() <= 1e-12 * std::max(Q.norm(), 1e-300);
  }

  if (native) {
    const NativeSplit& ns = *sys.split;
    s.native = true;
    s.h = ns.h;
    s.grad_h_full = ns.grad;
    s.stencil = ns.stencil;
    s.component = ns.component;
    const auto stencil = ns.stencil;
    const auto component = ns.component;
    s.grad_h_components = [stencil, component](std::span<const Index> support,
                                               std::span<const double> values,
                                               std::span<const Index> out) -> Vector {
      std::unordered_map<Index, double> lookup;
      for (std::size_t j = 0; j < support.size(); ++j) lookup[support[j]] = values[j];
      Vector g(static_cast<Index>(out.size()));
      std::vector<double> buf;
      for (std::size_t j = 0; j < out.size(); ++j) {
        const auto st = stencil(out[j]);
        buf.assign(st.size(), 0.0);
        for (std::size_t k = 0; k < st.size(); ++k) {
          const auto it = lookup.find(st[k]);
          if (it != lookup.end()) buf[k] = it->second;
        }
        g(static_cast<Index>(j)) = component(out[j], buf, {});
      }
      return g;
    };
    return s;
  }

  spdlog::warn("{}: no native split for the requested weight; DEIM falls back to dense "
               "gradient evaluation",
               sys.name);
  const ScalarFn H = sys.hamiltonian;
  const VectorFn grad = sys.grad;
  const SparseMatrix Qc = Q;
  s.h = [H, Qc](const Vector& x) { return H(x) - 0.5 * x.dot(Qc * x); };
  s.grad_h_full = [grad, Qc](const Vector& x) -> Vector { return grad(x) - Qc * x; };
  const VectorFn full = s.grad_h_full;
  s.grad_h_components = [full, n](std::span<const Index> support, std::span<const double> values,
                                  std::span<const Index> out) -> Vector {
    Vector x = Vector::Zero(n);
    for (std::size_t j = 0; j < support.size(); ++j) x(support[j]) = values[j];
    const Vector g = full(x);
    Vector o(static_cast<Index>(out.size()));
    for (std::size_t j = 0; j < out.size(); ++j) o(static_cast<Index>(j)) = g(out[j]);
    return o;
  };
  return s;
}

namespace {

Index argmax_abs(const Vector& v) {
  Index best = 0;
  double bv = -1.0;
  for (Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v(i));
    if (a > bv) {  // strict: keeps the smallest index on ties
      bv = a;
      best = i;
    }
  }
  return best;
}

Matrix rows_of(const Matrix& U, const std::vector<Index>& idx, Index cols) {
  Matrix out(static_cast<Index>(idx.size()), cols);
  for (std::size_t j = 0; j < idx.size(); ++j) out.row(static_cast<Index>(j)) = U.row(idx[j]).head(cols);
  return out;
}

}  // namespace

std::vector<Index> deim_indices(const Matrix& U) {
  const Index m = U.cols();
  if (m < 1) throw Error(ErrorCode::Selection, "DEIM basis has no columns");
  if (m > U.rows()) throw Error(ErrorCode::Selection, "DEIM basis has more columns than rows");
  std::vector<Index> idx;
  idx.reserve(m);
  if (!(U.col(0).cwiseAbs().maxCoeff() > 0.0))
    throw Error(ErrorCode::Selection, "DEIM basis column 1 is zero");
  idx.push_back(argmax_abs(U.col(0)));
  for (Index l = 1; l < m; ++l) {
    const Matrix A = rows_of(U, idx, l);
    Eigen::JacobiSVD<Matrix> svd(A);
    const Vector sv = svd.singularValues();
    if (!(sv(l - 1) > 1e-14 * sv(0)))
      throw Error(ErrorCode::Selection,
                  fmt::format("interpolation matrix is singular at step {}", l + 1));
    Vector rhs(l);
    for (Index j = 0; j < l; ++j) rhs(j) = U(idx[j], l);
    const Vector c = A.partialPivLu().solve(rhs);
    const Vector res = U.col(l) - U.leftCols(l) * c;
    const double peak = res.cwiseAbs().maxCoeff();
    if (!(peak > 1e-14 * std::max(1.0, U.col(l).cwiseAbs().maxCoeff())))
      throw Error(ErrorCode::Selection,
                  fmt::format("DEIM residual vanishes at step {}; basis is rank deficient", l + 1));
    idx.push_back(argmax_abs(res));
  }
  return idx;
}

DeimModel make_deim_model(const Matrix& U) {
  DeimModel d;
  d.U = U;
  d.indices = deim_indices(U);
  d.EtU = rows_of(U, d.indices, U.cols());
  Eigen::JacobiSVD<Matrix> svd(d.EtU);
  const Vector sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  d.condition = smin > 0.0 ? sv(0) / smin : INFINITY;
  d.growth = smin > 0.0 ? 1.0 / smin : INFINITY;
  if (!(d.condition <= 1e12))
    throw Error(ErrorCode::Selection,
                fmt::format("E^T U has condition number {:.3e} > 1e12; reduce m", d.condition));
  d.lu.compute(d.EtU);
  d.lu_t.compute(d.EtU.transpose());
  return d;
}

Vector deim_project(const DeimModel& model, const Vector& sampled) {
  return model.U * model.lu.solve(sampled);
}

Vector deim_apply(const DeimModel& model, const Vector& f) {
  Vector s(model.size());
  for (Index j = 0; j < model.size(); ++j) s(j) = f(model.indices[j]);
  return deim_project(model, s);
}

Vector deim_apply_transpose(const DeimModel& model, const Vector& x) {
  const Vector c = model.lu_t.solve(Vector(model.U.transpose() * x));
  Vector out = Vector::Zero(model.U.rows());
  for (Index j = 0; j < model.size(); ++j) out(model.indices[j]) = c(j);
  return out;
}

Matrix deim_projector(const DeimModel& model) {
  const Index n = model.U.rows();
  const Matrix inv = model.lu.inverse();
  Matrix P = Matrix::Zero(n, n);
  const Matrix UI = model.U * inv;
  for (Index j = 0; j < model.size(); ++j) P.col(model.indices[j]) = UI.col(j);
  return P;
}

DeimModel deim_basis_from_snapshots(const Matrix& G, Index m, const WeightedMetric& metric) {
  const Matrix U0 = pod_basis(G, m).basis;
  return make_deim_model(q_orthonormalize(U0, metric));
}

double deim_hamiltonian(const HamiltonianSplit& split, const DeimModel& model, const Vector& x) {
  return 0.5 * x.dot(split.Q * x) + split.h(deim_apply_transpose(model, x));
}

namespace {

// Precomputed data for the reduced DEIM gradient.
struct DeimKernel {
  Matrix Qr;   // V^T Q V
  Matrix M;    // (E^T U)^{-T} U^T V : x_r -> values of P^T V x_r at the indices
  Matrix N;    // V^T U (E^T U)^{-1}
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> M_rows;
  Matrix AQr;  // (J_r - R_r) Q_r
  Matrix AN;   // (J_r - R_r) N
  std::vector<Index> indices;
  // Stencil of component j as positions into `indices` (-1: not sampled).
  std::vector<std::vector<Index>> stencil_pos;
  std::function<double(Index, std::span<const double>, std::span<double>)> component;
  HamiltonianSplit split;
  Index n = 0;
};

}  // namespace

ReducedSystem deim_reduce(const NlphSystem& sys, const HamiltonianSplit& split,
                          const ReductionBasis& basis, const DeimModel& model) {
  const Index n = sys.dim();
  if (model.U.rows() != n || basis.V.rows() != n)
    throw Error(ErrorCode::Structure, "DEIM basis and projection basis dimensions differ");

  ReducedSystem red;
  red.V = basis.V;
  red.W = basis.W;
  red.provenance = basis.provenance;
  red.deim = true;
  red.counter = std::make_shared<EvalCounter>();
  Matrix Jr, Rr, Br;
  project_matrices(sys, basis.W, Jr, Rr, Br);
  NlphSystem& s = red.system;
  s.name = fmt::format("{} deim r={} m={}", sys.name, basis.rank(), model.size());
  s.J = to_sparse(Jr);
  s.R = to_sparse(Rr);
  s.B = Br;

  auto k = std::make_shared<DeimKernel>();
  const Matrix QV = split.metric.apply(basis.V);
  k->Qr = basis.V.transpose() * QV;
  k->Qr = (0.5 * (k->Qr + k->Qr.transpose())).eval();
  const Matrix UtV = model.U.transpose() * basis.V;
  k->M = model.lu_t.solve(UtV);
  k->M_rows = k->M;
  const Matrix VtU = basis.V.transpose() * model.U;
  k->N = model.lu_t.solve(Matrix(VtU.transpose())).transpose();
  k->AQr = (Jr - Rr) * k->Qr;
  k->AN = (Jr - Rr) * k->N;
  k->indices = model.indices;
  k->split = split;
  k->n = n;
  const Index m = model.size();

  const auto counter = red.counter;
  if (split.native) {
    std::unordered_map<Index, Index> where;
    for (Index j = 0; j < m; ++j) where[model.indices[j]] = j;
    k->stencil_pos.resize(m);
    for (Index j = 0; j < m; ++j) {
      const auto st = split.stencil(model.indices[j]);
      for (Index v : st) {
        const auto it = where.find(v);
        k->stencil_pos[j].push_back(it == where.end() ? -1 : it->second);
      }
    }
    k->component = split.component;

    s.grad = [k, counter, m](const Vector& xr) -> Vector {
      const Vector c = k->M * xr;
      Vector g(m);
      double buf[16];
      for (Index j = 0; j < m; ++j) {
        const auto& pos = k->stencil_pos[j];
        const std::size_t len = pos.size();
        std::vector<double> heap;
        double* vals = buf;
        if (len > 16) {
          heap.resize(len);
          vals = heap.data();
        }
        for (std::size_t q = 0; q < len; ++q) vals[q] = pos[q] >= 0 ? c(pos[q]) : 0.0;
        g(j) = k->component(k->indices[j], std::span<const double>(vals, len), {});
      }
      counter->gradient_calls.fetch_add(1, std::memory_order_relaxed);
      counter->component_evaluations.fetch_add(static_cast<std::uint64_t>(m),
                                               std::memory_order_relaxed);
      return k->Qr * xr + k->N * g;
    };
    // Rows of Dg M, with Dg the Jacobian of the sampled components in c = M x_r.
    // The component values go to `g` when given.
    const auto dg_m = [k, m](const Vector& xr, Vector* g) -> Matrix {
      const Vector c = k->M * xr;
      Matrix DgM = Matrix::Zero(m, xr.size());
      std::vector<double> vals, d;
      for (Index j = 0; j < m; ++j) {
        const auto& pos = k->stencil_pos[j];
        vals.resize(pos.size());
        d.assign(pos.size(), 0.0);
        for (std::size_t q = 0; q < pos.size(); ++q) vals[q] = pos[q] >= 0 ? c(pos[q]) : 0.0;
        const double value = k->component(k->indices[j], vals, d);
        if (g) (*g)(j) = value;
        for (std::size_t q = 0; q < pos.size(); ++q)
          if (pos[q] >= 0 && d[q] != 0.0) DgM.row(j) += d[q] * k->M_rows.row(pos[q]);
      }
      return DgM;
    };
    s.hess = [k, dg_m](const Vector& xr) -> SparseMatrix {
      // N = M^T, so N Dg M is symmetric; form the lower triangle only.
      Matrix Hr = k->Qr;
      Hr.triangularView<Eigen::Lower>() += k->N * dg_m(xr, nullptr);
      return Matrix(Hr.selfadjointView<Eigen::Lower>()).sparseView(0.0, 0.0);
    };
    s.grad_and_flow_jacobian = [k, dg_m, counter, m](const Vector& xr) {
      Vector g(m);
      const Matrix DgM = dg_m(xr, &g);
      counter->gradient_calls.fetch_add(1, std::memory_order_relaxed);
      counter->component_evaluations.fetch_add(static_cast<std::uint64_t>(m),
                                               std::memory_order_relaxed);
      GradJacobian out{k->Qr * xr + k->N * g, k->AQr};
      out.flow_jacobian.noalias() += k->AN * DgM;
      return out;
    };
  } else {
    s.grad = [k, counter, m](const Vector& xr) -> Vector {
      const Vector c = k->M * xr;
      const Vector g = k->split.grad_h_components(
          k->indices, std::span<const double>(c.data(), static_cast<std::size_t>(c.size())),
          k->indices);
      counter->gradient_calls.fetch_add(1, std::memory_order_relaxed);
      counter->component_evaluations.fetch_add(static_cast<std::uint64_t>(m),
                                               std::memory_order_relaxed);
      return k->Qr * xr + k->N * g;
    };
    if (split.hess_full) {
      s.hess = [k, m](const Vector& xr) -> SparseMatrix {
        const Vector c = k->M * xr;
        Vector z = Vector::Zero(k->n);
        for (Index j = 0; j < m; ++j) z(k->indices[j]) = c(j);
        const Matrix Hh = Matrix(k->split.hess_full(z)) - Matrix(k->split.Q);
        Matrix Dg(m, m);
        for (Index a = 0; a < m; ++a)
          for (Index b = 0; b < m; ++b) Dg(a, b) = Hh(k->indices[a], k->indices[b]);
        Matrix Hr = k->Qr + k->N * Dg * k->M;
        Hr = (0.5 * (Hr + Hr.transpose())).eval();
        return Hr.sparseView(0.0, 0.0);
      };
    }
  }

  const auto Vp = std::make_shared<const Matrix>(basis.V);
  const auto modelp = std::make_shared<const DeimModel>(model);
  s.hamiltonian = [k, Vp, modelp](const Vector& xr) {
    return 0.5 * xr.dot(k->Qr * xr) + k->split.h(deim_apply_transpose(*modelp, *Vp * xr));
  };
  return red;
}

ReductionBasis normalize_basis(const ReductionBasis& basis, const WeightedMetric& metric) {
  Matrix gram = basis.V.transpose() * metric.apply(basis.V);
  gram = (0.5 * (gram + gram.transpose())).eval();
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::Rank, "V^T Q V is not positive definite");
  const Matrix L = llt.matrixL();
  ReductionBasis out = basis;
  out.V = L.triangularView<Eigen::Lower>().solve(basis.V.transpose()).transpose();  // V L^{-T}
  out.W = basis.W * L;
  return out;
}

DeimReduced pod_deim_ph(const NlphSystem& sys, const SnapshotSet& snapshots, Index r, Index m,
                        const HamiltonianSplit& split) {
  const Matrix V = q_orthonormalize(pod_basis(snapshots.X, r).basis, split.metric);
  const Matrix W0 = pod_basis(snapshots.F, r).basis;
  ReductionBasis basis = biorthonormalize(V, W0, Provenance::Pod);
  const Matrix G =
      snapshots.has_remainder() ? snapshots.G : Matrix(snapshots.F - split.metric.apply(snapshots.X));
  DeimModel model = deim_basis_from_snapshots(G, m, split.metric);
  ReducedSystem red = deim_reduce(sys, split, basis, model);
  return DeimReduced{std::move(red), std::move(basis), std::move(model)};
}

}  // namespace phred
