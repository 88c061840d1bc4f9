// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"
#include "phred/basis.hpp"
#include "phred/error.hpp"
#include "phred/models.hpp"
#include "phred/reduce.hpp"

#include <doctest.h>

#include <Eigen/SVD>

using namespace phred;
using namespace testutil;

namespace {

NlphSystem small_ladder(int stages = 10) {
  LadderParams p;
  p.stages = stages;
  p.C0 = 1e-9;
  return ladder_network(p);
}

SnapshotSet ladder_snapshots(const NlphSystem& s) {
  IntegratorConfig cfg;
  cfg.dt = 0.005;
  return collect_snapshots(s, on_port(gaussian_pulse({}), s.ports()), {0.0, 3.0}, cfg, 1);
}

double subspace_gap(const Matrix& A, const Matrix& B) {
  // Largest distance from a column of orth(A) to range(B).
  const Matrix Qa = orth(A), Qb = orth(B);
  return (Qa - Qb * (Qb.transpose() * Qa)).norm();
}

}  // namespace

TEST_SUITE("basis") {

TEST_CASE("POD residual equals the discarded singular values") {
  std::mt19937_64 rng(10);
  const Matrix S = random_matrix(rng, 30, 12);
  const PodResult p = pod_basis(S, 5);
  CHECK((p.basis.transpose() * p.basis - Matrix::Identity(5, 5)).norm() < 1e-12);
  const double resid = (S - p.basis * (p.basis.transpose() * S)).squaredNorm();
  CHECK(resid == doctest::Approx(p.singular_values.tail(7).squaredNorm()).epsilon(1e-10));
  CHECK(p.singular_values.size() == 12);
}

TEST_CASE("POD beyond the numerical rank is a rank error") {
  std::mt19937_64 rng(11);
  const Matrix S = random_matrix(rng, 20, 3) * random_matrix(rng, 3, 10);
  CHECK_NOTHROW(pod_basis(S, 3));
  try {
    pod_basis(S, 4);
    FAIL("expected rank error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Rank);
  }
}

TEST_CASE("biorthonormalization") {
  std::mt19937_64 rng(12);
  const Matrix V0 = random_matrix(rng, 15, 4), W0 = random_matrix(rng, 15, 4);
  const ReductionBasis b = biorthonormalize(V0, W0);
  CHECK(b.biorthogonality_defect() < 1e-12);
  CHECK((b.V - V0).norm() == 0.0);
  CHECK(subspace_gap(b.W, W0) < 1e-10);
  // A test space orthogonal to the trial space cannot be oriented.
  Matrix V1 = Matrix::Zero(6, 2), W1 = Matrix::Zero(6, 2);
  V1(0, 0) = V1(1, 1) = 1.0;
  W1(2, 0) = W1(3, 1) = 1.0;
  try {
    biorthonormalize(V1, W1);
    FAIL("expected orientation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Orientation);
  }
}

TEST_CASE("Q-orthonormalization keeps the range") {
  std::mt19937_64 rng(13);
  const Matrix Q = random_spd(rng, 10);
  const WeightedMetric m = WeightedMetric::dense(Q);
  const Matrix V0 = random_matrix(rng, 10, 4);
  const Matrix V = q_orthonormalize(V0, m);
  CHECK((V.transpose() * Q * V - Matrix::Identity(4, 4)).norm() < 1e-12);
  CHECK(subspace_gap(V, V0) < 1e-10);
}

TEST_CASE("POD-PH bases on ladder snapshots") {
  const NlphSystem s = small_ladder();
  const SnapshotSet snaps = ladder_snapshots(s);
  CHECK(snaps.count() == 601);
  const ReductionBasis b = pod_ph_bases(snaps, 6);
  CHECK(b.rank() == 6);
  CHECK(b.provenance == Provenance::Pod);
  CHECK(b.biorthogonality_defect() < 1e-10);
  CHECK(subspace_gap(b.V, pod_basis(snaps.X, 6).basis) < 1e-10);
  CHECK(subspace_gap(b.W, pod_basis(snaps.F, 6).basis) < 1e-10);
}

TEST_CASE("snapshot remainder") {
  const NlphSystem s = toda_lattice({10, {}});
  const WeightedMetric w = linearize(s).metric;
  IntegratorConfig cfg;
  cfg.dt = 0.1;
  const SnapshotSet snaps =
      collect_snapshots(s, on_port(constant_signal(0.1), 1), {0.0, 5.0}, cfg, 2, &w);
  REQUIRE(snaps.has_remainder());
  CHECK(snaps.count() == 26);
  CHECK((snaps.G - (snaps.F - w.apply(snaps.X))).norm() < 1e-14);
}

TEST_CASE("linearization of the Toda lattice is the split weight") {
  const NlphSystem s = toda_lattice({20, {}});
  const LinearPhModel lin = linearize(s);
  CHECK((Matrix(lin.Q) - Matrix(s.split->Q)).norm() < 1e-14);
}

TEST_CASE("sparse and dense transfer evaluation agree") {
  const NlphSystem s = small_ladder(6);
  const LinearPhModel lin = linearize(s);
  const Matrix A = Matrix(lin.J) - Matrix(lin.R);
  for (Complex z : {Complex(0.3, 0.0), Complex(1.0, 5.0), Complex(10.0, -2.0)}) {
    const ComplexMatrix a = transfer_eval(lin, z);
    const ComplexMatrix b = transfer_eval_dense(A, Matrix(lin.Q), lin.B, z);
    CHECK((a - b).norm() <= 1e-10 * b.norm());
  }
}

TEST_CASE("interpolatory bases satisfy the tangential conditions") {
  const NlphSystem s = small_ladder();
  const LinearPhModel lin = linearize(s);
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> ud(0.2, 30.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Complex> sh;
    std::vector<ComplexVector> dir;
    const Complex c(ud(rng), ud(rng));
    ComplexVector b(2);
    b << Complex(ud(rng), 1.0), Complex(-1.0, ud(rng));
    sh = {Complex(ud(rng), 0.0), c, std::conj(c)};
    dir = {ComplexVector::Ones(2), b, b.conjugate()};
    const Matrix V = q_orthonormalize(interpolatory_basis(lin, sh, dir), lin.metric);
    CHECK(V.cols() == 3);
    NlphSystem lsys;
    lsys.J = lin.J;
    lsys.R = lin.R;
    lsys.B = lin.B;
    Matrix Jr, Rr, Br;
    project_matrices(lsys, lin.metric.apply(V), Jr, Rr, Br);
    for (std::size_t i = 0; i < sh.size(); ++i) {
      const ComplexVector full = transfer_eval(lin, sh[i]) * dir[i];
      const ComplexVector red =
          transfer_eval_dense(Jr - Rr, Matrix::Identity(3, 3), Br, sh[i]) * dir[i];
      CHECK((full - red).norm() <= 1e-8 * full.norm());
    }
  }
}

TEST_CASE("interpolation needs conjugate-closed shifts") {
  const LinearPhModel lin = linearize(small_ladder(4));
  CHECK_THROWS_AS(interpolatory_basis(lin, {Complex(1.0, 2.0)}, {ComplexVector::Ones(2)}), Error);
}

TEST_CASE("H2 iteration on a small ladder") {
  const NlphSystem s = small_ladder();
  const LinearPhModel lin = linearize(s);
  const H2Result res = h2eps_ph_bases(lin, 4);
  CHECK(res.basis.rank() == 4);
  CHECK(res.basis.biorthogonality_defect() < 1e-10);
  CHECK(res.basis.provenance == Provenance::H2eps);
  CHECK(res.log.iterations >= 1);
  CHECK(res.log.shifts.size() == res.log.changes.size());
  // W = Q V with V^T Q V = I.
  CHECK((res.basis.W - lin.metric.apply(res.basis.V)).norm() < 1e-10);
  // Converged shifts lie in the right half plane.
  for (const Complex& z : res.shifts) CHECK(z.real() > 0.0);
  if (res.log.converged) CHECK(res.log.changes.back() < 1e-6);
}

TEST_CASE("hybrid bases span both inputs") {
  const NlphSystem s = small_ladder();
  const ReductionBasis pod = pod_ph_bases(ladder_snapshots(s), 3);
  const ReductionBasis h2 = h2eps_ph_bases(linearize(s), 3).basis;
  const ReductionBasis hy = hybrid_bases(pod, h2);
  CHECK(hy.rank() == 6);
  CHECK(hy.provenance == Provenance::Hybrid);
  CHECK(hy.biorthogonality_defect() < 1e-10);
  Matrix both(pod.V.rows(), 6);
  both << pod.V, h2.V;
  CHECK(subspace_gap(hy.V, both) < 1e-8);
  CHECK(subspace_gap(both, hy.V) < 1e-8);
}

TEST_CASE("hybrid drops a repeated direction and warns") {
  std::mt19937_64 rng(15);
  const Matrix V = random_matrix(rng, 12, 3), W = random_matrix(rng, 12, 3);
  const ReductionBasis a = biorthonormalize(V, W);
  const ReductionBasis hy = hybrid_bases(a, a);
  CHECK(hy.rank() == 3);
  CHECK_FALSE(hy.warnings.empty());
}

TEST_CASE("orth truncates at the relative tolerance") {
  std::mt19937_64 rng(16);
  Matrix S = random_matrix(rng, 10, 4);
  S.col(3) = S.col(0) + 1e-13 * random_vector(rng, 10);
  CHECK(orth(S).cols() == 3);
  CHECK(orth(S, 1e-15).cols() == 4);
}

}  // TEST_SUITE
