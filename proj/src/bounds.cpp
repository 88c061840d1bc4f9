// SPDX-License-Identifier: Apache-2.0
#include "phred/bounds.hpp"

#include "phred/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <random>

namespace phred {

const char* to_string(LipschitzMethod m) {
  switch (m) {
    case LipschitzMethod::SampledPairs: return "sampled-pairs";
    case LipschitzMethod::HessianSup: return "hessian-sup";
    case LipschitzMethod::ExactLinear: return "exact-linear";
  }
  return "unknown";
}

namespace {

template <class PairFn>
void for_each_pair(const SampleSet& s, PairFn&& fn) {
  if (!s.pairs.empty()) {
    for (const auto& [i, j] : s.pairs) fn(i, j);
    return;
  }
  const Index N = static_cast<Index>(s.points.size());
  for (Index i = 0; i < N; ++i)
    for (Index j = i + 1; j < N; ++j) fn(i, j);
}

std::vector<Vector> evaluate_all(const MapSpec& F, const SampleSet& s) {
  if (!F.value) throw Error(ErrorCode::Estimation, "sampled estimate needs map values");
  std::vector<Vector> out;
  out.reserve(s.points.size());
  for (const auto& p : s.points) out.push_back(F.value(p));
  return out;
}

template <class Quotient, class JacobianNorm>
LipschitzEstimate estimate(const MapSpec& F, const WeightedMetric& metric, const SampleSet& s,
                           LipschitzMethod method, Quotient&& quotient, JacobianNorm&& jnorm) {
  LipschitzEstimate est;
  est.method = method;
  switch (method) {
    case LipschitzMethod::ExactLinear: {
      if (F.linear.size() == 0) throw Error(ErrorCode::Estimation, "exact-linear needs the matrix");
      est.value = jnorm(F.linear);
      est.lower_bound = false;
      return est;
    }
    case LipschitzMethod::HessianSup: {
      if (!F.jacobian) throw Error(ErrorCode::Estimation, "hessian-sup needs a Jacobian");
      if (s.points.empty()) throw Error(ErrorCode::Estimation, "empty sample set");
      double v = -std::numeric_limits<double>::infinity();
      for (const auto& p : s.points) v = std::max(v, jnorm(F.jacobian(p)));
      est.value = v;
      est.samples = static_cast<Index>(s.points.size());
      return est;
    }
    case LipschitzMethod::SampledPairs: {
      if (s.points.size() < 2) throw Error(ErrorCode::Estimation, "need at least two samples");
      const auto vals = evaluate_all(F, s);
      double v = -std::numeric_limits<double>::infinity();
      Index used = 0;
      for_each_pair(s, [&](Index i, Index j) {
        const Vector du = s.points[i] - s.points[j];
        const double d2 = metric.inner(du, du);
        if (!(d2 > 0.0)) return;
        v = std::max(v, quotient(du, Vector(vals[i] - vals[j]), d2));
        ++used;
      });
      if (used == 0) throw Error(ErrorCode::Estimation, "no distinct sample pairs");
      est.value = v;
      est.samples = used;
      return est;
    }
  }
  return est;
}

}  // namespace

LipschitzEstimate lipschitz(const MapSpec& F, const WeightedMetric& metric,
                            const SampleSet& samples, LipschitzMethod method) {
  return estimate(
      F, metric, samples, method,
      [&](const Vector&, const Vector& dF, double d2) {
        return std::sqrt(metric.inner(dF, dF) / d2);
      },
      [&](const Matrix& A) { return q_op_norm(metric, A); });
}

LipschitzEstimate log_lipschitz(const MapSpec& F, const WeightedMetric& metric,
                                const SampleSet& samples, LipschitzMethod method) {
  return estimate(
      F, metric, samples, method,
      [&](const Vector& du, const Vector& dF, double d2) { return metric.inner(du, dF) / d2; },
      [&](const Matrix& A) { return q_log_norm(metric, A); });
}

std::vector<Vector> sample_cloud(const Matrix& states, int copies, double rel, std::uint64_t seed) {
  std::vector<Vector> out;
  const Index k = states.cols();
  out.reserve(static_cast<std::size_t>(k) * (copies + 1));
  const double amp = states.size() ? states.cwiseAbs().maxCoeff() : 0.0;
  const double sd = rel * (amp > 0.0 ? amp : 1.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index j = 0; j < k; ++j) {
    out.push_back(states.col(j));
    for (int c = 0; c < copies; ++c) {
      Vector p = states.col(j);
      for (Index i = 0; i < p.size(); ++i) p(i) += sd * normal(rng);
      out.push_back(std::move(p));
    }
  }
  return out;
}

namespace {

// sum_{k>=0} x^k / (k + shift)!  for |x| <= 0.5
double exp_tail_series(double x, int shift) {
  double term = 1.0;
  for (int i = 2; i <= shift; ++i) term /= i;
  double acc = term;
  for (int k = 1; k < 40; ++k) {
    term *= x / (k + shift);
    acc += term;
    if (std::abs(term) < 1e-18 * std::abs(acc)) break;
  }
  return acc;
}

}  // namespace

double c_alpha(double alpha, double T) {
  const double x = 2.0 * alpha * T;
  if (std::abs(x) <= 0.5) return T * exp_tail_series(x, 1);
  return std::expm1(x) / (2.0 * alpha);
}

double C_alpha(double alpha, double T) {
  const double x = 2.0 * alpha * T;
  if (std::abs(x) <= 0.5) return T * T * exp_tail_series(x, 2);
  return (c_alpha(alpha, T) - T) / (2.0 * alpha);
}

namespace {

double spectral_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(M);
  return svd.singularValues()(0);
}

double finite_or_inf(double v) { return std::isfinite(v) ? v : INFINITY; }

Matrix hessian_at(const NlphSystem& sys, const Vector& x) {
  if (sys.has_hessian()) return Matrix(sys.hess(x));
  return fd_hessian(sys.grad, x);
}

}  // namespace

BoundReport projection_bound_report(const NlphSystem& sys, const ReductionBasis& basis,
                                    const WeightedMetric& metric, const Trajectory& full,
                                    const Trajectory& reduced, const BoundOptions& opts) {
  if (full.times.size() != reduced.times.size())
    throw Error(ErrorCode::Comparison, "full and reduced trajectories use different grids");
  const Index n = sys.dim();
  const ReductionBasis nb = normalize_basis(basis, metric);
  // Reduced coordinates transform as x_r' = R x_r with V' = V R^{-1}.
  const Matrix Rfac = nb.W.transpose() * basis.V;
  const Matrix P = nb.V * nb.W.transpose();
  const Matrix A = Matrix(sys.J) - Matrix(sys.R);

  BoundReport rep;
  const double T = full.times.back() - full.times.front();
  rep.T = T;

  // Best-approximation residuals in the Q geometry.
  const Matrix Vt = nb.V;  // Q-orthonormal
  const Matrix Wt = q_orthonormalize(nb.W, metric);
  const Matrix QVt = metric.apply(Vt);
  const Matrix QWt = metric.apply(Wt);
  const Index K = static_cast<Index>(full.times.size());
  Vector ex(K), eF(K), dx(K), dy(K);
  for (Index k = 0; k < K; ++k) {
    const Vector x = full.states.row(k).transpose();
    const Vector F = sys.grad(x);
    const Vector rx = x - Vt * (QVt.transpose() * x);
    const Vector rF = F - Wt * (QWt.transpose() * F);
    ex(k) = metric.inner(rx, rx);
    eF(k) = metric.inner(rF, rF);
    const Vector d = x - basis.V * reduced.states.row(k).transpose();
    dx(k) = metric.inner(d, d);
    dy(k) = (full.outputs.row(k) - reduced.outputs.row(k)).squaredNorm();
  }
  rep.eps_x2 = trapezoid(full.times, ex);
  rep.eps_F2 = trapezoid(full.times, eF);
  rep.measured_state = trapezoid(full.times, dx);
  rep.measured_output = trapezoid(full.times, dy);

  // Lipschitz data.
  SampleSet samples;
  samples.points = sample_cloud(full.states.transpose(), opts.cloud_copies, opts.cloud_rel,
                                opts.seed);
  const Matrix PAPt = P * A * P.transpose();
  MapSpec F;
  F.value = sys.grad;
  F.jacobian = [&](const Vector& x) { return hessian_at(sys, x); };
  MapSpec G;
  G.value = [&](const Vector& x) -> Vector { return PAPt * sys.grad(x); };
  G.jacobian = [&](const Vector& x) -> Matrix { return PAPt * hessian_at(sys, x); };
  if (opts.method == LipschitzMethod::ExactLinear) {
    const Matrix H0 = hessian_at(sys, Vector::Zero(n));
    F.linear = H0;
    G.linear = PAPt * H0;
  }
  const auto LF = lipschitz(F, metric, samples, opts.method);
  const auto aG = log_lipschitz(G, metric, samples, opts.method);
  rep.lipschitz_F = LF.value;
  rep.lipschitz_method = to_string(LF.method);
  rep.alpha = aG.value;
  rep.alpha_method = to_string(aG.method);

  rep.proj_norm = q_op_norm(metric, P);
  rep.proj_transpose_norm = q_op_norm(metric, P.transpose());
  rep.beta = q_op_norm(metric, P * A) * rep.proj_transpose_norm;
  rep.gamma = rep.lipschitz_F * rep.proj_norm;
  const Matrix BQB = sys.B.transpose() * metric.solve(sys.B);
  rep.delta = 2.0 * spectral_norm(BQB) * rep.proj_transpose_norm * rep.proj_transpose_norm;

  rep.c_alpha = finite_or_inf(c_alpha(rep.alpha, T));
  rep.C_alpha = finite_or_inf(C_alpha(rep.alpha, T));
  const double L2 = rep.lipschitz_F * rep.lipschitz_F;
  rep.Cx = finite_or_inf(std::pow(2.0 * rep.beta * rep.gamma, 2) * rep.C_alpha +
                         2.0 * rep.proj_norm * rep.proj_norm);
  rep.CF = finite_or_inf(std::pow(2.0 * rep.beta, 2) * rep.C_alpha);
  rep.C0 = finite_or_inf(2.0 * rep.c_alpha);
  rep.Cx_hat = finite_or_inf(rep.delta * L2 * rep.Cx);
  rep.CF_hat = finite_or_inf(rep.delta * (1.0 + L2 * rep.CF));
  rep.C0_hat = finite_or_inf(rep.delta * L2 * rep.C0);

  const Vector x0 = full.states.row(0).transpose();
  const Vector xr0 = Rfac * reduced.states.row(0).transpose();
  rep.initial_deviation2 = (nb.W.transpose() * x0 - xr0).squaredNorm();

  auto combine = [](double a, double ea, double b, double eb, double c, double ec) {
    auto term = [](double k, double e) { return e == 0.0 ? 0.0 : k * e; };
    return finite_or_inf(term(a, ea) + term(b, eb) + term(c, ec));
  };
  rep.state_bound =
      combine(rep.Cx, rep.eps_x2, rep.CF, rep.eps_F2, rep.C0, rep.initial_deviation2);
  rep.output_bound =
      combine(rep.Cx_hat, rep.eps_x2, rep.CF_hat, rep.eps_F2, rep.C0_hat, rep.initial_deviation2);
  return rep;
}

double deim_projector_q_norm(const DeimModel& model, const WeightedMetric& metric) {
  const Index n = model.U.rows();
  const Index m = model.size();
  Matrix E = Matrix::Zero(n, m);
  for (Index j = 0; j < m; ++j) E(model.indices[j], j) = 1.0;
  const Matrix LiE = metric.factor_solve(E);          // n x m
  const Matrix X = model.lu.solve(Matrix(LiE.transpose()));  // m x n
  return spectral_norm(X);
}

DeimLemmaReport deim_lemma_bound(const DeimModel& model, const WeightedMetric& metric,
                                 const Matrix& f_samples) {
  DeimLemmaReport rep;
  rep.projector_q_norm = deim_projector_q_norm(model, metric);
  const Index k = f_samples.cols();
  rep.bound.resize(k);
  rep.measured.resize(k);
  const Matrix QU = metric.apply(model.U);
  for (Index j = 0; j < k; ++j) {
    const Vector f = f_samples.col(j);
    const Vector best = f - model.U * (QU.transpose() * f);
    rep.bound(j) = rep.projector_q_norm * q_norm(metric, best);
    rep.measured(j) = q_norm(metric, f - deim_apply(model, f));
    const double slack = 1e-12 * (q_norm(metric, f) + 1e-300) * std::max(1.0, rep.projector_q_norm);
    if (rep.measured(j) > rep.bound(j) + slack) ++rep.violations;
  }
  return rep;
}

DeimBoundReport deim_reduction_bound(const NlphSystem& sys, const HamiltonianSplit& split,
                                     const ReductionBasis& basis, const DeimModel& model,
                                     const ReducedSystem& deim_system, const Trajectory& exact,
                                     const Trajectory& deim, const BoundOptions& opts) {
  if (exact.times.size() != deim.times.size())
    throw Error(ErrorCode::Comparison, "reduced trajectories use different grids");
  const WeightedMetric& metric = split.metric;
  const Index n = sys.dim();
  const Matrix P = basis.V * basis.W.transpose();
  const Matrix A = Matrix(sys.J) - Matrix(sys.R);
  const Matrix Pd = deim_projector(model);
  const Matrix PAPt = P * A * P.transpose();
  const Matrix Q = split.metric.matrix();

  DeimBoundReport rep;
  rep.method = to_string(opts.method);
  rep.times = exact.times;
  const Index K = static_cast<Index>(exact.times.size());

  // Lifted exact-reduced states.
  Matrix lifted(n, K);
  for (Index k = 0; k < K; ++k) lifted.col(k) = basis.V * exact.states.row(k).transpose();
  for (Index k = 0; k < K; ++k) {
    const Vector xi = lifted.col(k);
    const Vector diff = split.grad_h_full(xi) - Pd * split.grad_h_full(Pd.transpose() * xi);
    rep.eps_h = std::max(rep.eps_h, q_norm(metric, diff));
  }
  {
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(deim_system.system.R), Eigen::EigenvaluesOnly);
    rep.rho_min = es.eigenvalues()(0);
  }

  auto hess_h = [&](const Vector& z) -> Matrix {
    if (split.hess_full) return Matrix(split.hess_full(z)) - Q;
    return fd_hessian(split.grad_h_full, z);
  };
  SampleSet samples;
  samples.points = sample_cloud(lifted, opts.cloud_copies, opts.cloud_rel, opts.seed);
  MapSpec G;
  G.value = [&](const Vector& x) -> Vector {
    return PAPt * (Pd * split.grad_h_full(Pd.transpose() * x));
  };
  G.jacobian = [&](const Vector& x) -> Matrix {
    return PAPt * Pd * hess_h(Pd.transpose() * x) * Pd.transpose();
  };
  MapSpec Hh;
  Hh.value = [&](const Vector& x) -> Vector { return Pd * split.grad_h_full(Pd.transpose() * x); };
  Hh.jacobian = [&](const Vector& x) -> Matrix {
    return Pd * hess_h(Pd.transpose() * x) * Pd.transpose();
  };
  if (opts.method == LipschitzMethod::ExactLinear) {
    const Matrix H0 = hess_h(Vector::Zero(n));
    G.linear = PAPt * Pd * H0 * Pd.transpose();
    Hh.linear = Pd * H0 * Pd.transpose();
  }
  rep.log_lipschitz_G = log_lipschitz(G, metric, samples, opts.method).value;
  rep.lipschitz_h = lipschitz(Hh, metric, samples, opts.method).value;
  rep.alpha = rep.log_lipschitz_G - rep.rho_min;
  rep.beta = q_op_norm(metric, PAPt);
  rep.gamma = 1.0 + rep.lipschitz_h;
  rep.delta = spectral_norm(sys.B) * spectral_norm(P);

  rep.state_bound.resize(K);
  rep.output_bound.resize(K);
  rep.measured_state.resize(K);
  rep.measured_output.resize(K);
  const double t0 = exact.times.front();
  for (Index k = 0; k < K; ++k) {
    const double t = exact.times[k] - t0;
    const double at = rep.alpha * t;
    const double growth = std::abs(at) < 1e-12 ? t : std::expm1(at) / rep.alpha;
    rep.state_bound(k) = finite_or_inf(rep.beta * growth * rep.eps_h);
    rep.output_bound(k) =
        finite_or_inf(rep.delta * (1.0 + rep.beta * rep.gamma * growth) * rep.eps_h);
    rep.measured_state(k) = (exact.states.row(k) - deim.states.row(k)).norm();
    rep.measured_output(k) = (exact.outputs.row(k) - deim.outputs.row(k)).norm();
    const double tol = 1e-12 * (1.0 + exact.states.row(k).norm());
    if (rep.measured_state(k) > rep.state_bound(k) + tol) ++rep.state_violations;
    if (rep.measured_output(k) > rep.output_bound(k) + tol) ++rep.output_violations;
  }
  return rep;
}

}  // namespace phred
