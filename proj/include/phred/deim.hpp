// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "phred/basis.hpp"
#include "phred/core.hpp"
#include "phred/reduce.hpp"

#include <Eigen/LU>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace phred {

/// H(x) = 1/2 x^T Q x + h(x). `grad_h_components(support, values, out)`
/// returns the entries `out` of grad h at the vector whose only nonzeros are
/// `values` at the indices `support`.
struct HamiltonianSplit {
  SparseMatrix Q;
  WeightedMetric metric;
  ScalarFn h;
  VectorFn grad_h_full;
  SparseMatrixFn hess_full;  // Hessian of H (optional)
  std::function<Vector(std::span<const Index>, std::span<const double>, std::span<const Index>)>
      grad_h_components;
  bool native = false;
  // Native stencil access (valid when native).
  std::function<std::vector<Index>(Index)> stencil;
  std::function<double(Index, std::span<const double>, std::span<double>)> component;
};

/// Uses the model's own split when its weight equals Q, otherwise the dense
/// fallback h = H - 1/2 x^T Q x (logged as a performance warning).
HamiltonianSplit build_split(const NlphSystem& sys, const SparseMatrix& Q);

/// Greedy interpolation indices (0-based), ties resolved to the smallest index.
std::vector<Index> deim_indices(const Matrix& U);

struct DeimModel {
  Matrix U;                     // n x m
  std::vector<Index> indices;   // m distinct rows
  Matrix EtU;                   // rows of U at the indices
  Eigen::PartialPivLU<Matrix> lu;
  Eigen::PartialPivLU<Matrix> lu_t;  // of (E^T U)^T
  double growth = 0.0;          // |(E^T U)^{-1}|_2
  double condition = 0.0;

  Index size() const { return U.cols(); }
};

/// Selects indices for U and factors E^T U. Throws Error(Selection) when the
/// condition number of E^T U exceeds 1e12.
DeimModel make_deim_model(const Matrix& U);

/// U (E^T U)^{-1} values
Vector deim_project(const DeimModel& model, const Vector& sampled);
/// P f for a full vector f.
Vector deim_apply(const DeimModel& model, const Vector& f);
/// P^T x = E (U^T E)^{-1} U^T x
Vector deim_apply_transpose(const DeimModel& model, const Vector& x);
/// Dense n x n projector U (E^T U)^{-1} E^T.
Matrix deim_projector(const DeimModel& model);

/// Truncated SVD of G, Q-orthonormalized, then index selection.
DeimModel deim_basis_from_snapshots(const Matrix& G, Index m, const WeightedMetric& metric);

/// 1/2 x^T Q x + h(P^T x)
double deim_hamiltonian(const HamiltonianSplit& split, const DeimModel& model, const Vector& x);

/// Reduced system with gradient V^T Q V x_r + V^T P grad h(P^T V x_r). With a
/// native split only the m interpolated components of grad h are evaluated.
ReducedSystem deim_reduce(const NlphSystem& sys, const HamiltonianSplit& split,
                          const ReductionBasis& basis, const DeimModel& model);

struct DeimReduced {
  ReducedSystem reduced;
  ReductionBasis basis;
  DeimModel model;
};

/// POD state basis with V^T Q V = I, POD gradient basis W with V^T W = I,
/// and a DEIM layer from the remainder snapshots.
DeimReduced pod_deim_ph(const NlphSystem& sys, const SnapshotSet& snapshots, Index r, Index m,
                        const HamiltonianSplit& split);

/// Rescales a basis so that V^T Q V = I while keeping W^T V = I and V W^T.
ReductionBasis normalize_basis(const ReductionBasis& basis, const WeightedMetric& metric);

}  // namespace phred
