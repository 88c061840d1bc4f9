// SPDX-License-Identifier: Apache-2.0
// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.
#include "phred/error.hpp"
#include "phred/pipeline.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>

using namespace phred;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, bool ok, const std::string& name, const std::string& detail) {
  if (!ok) ++failures;
  fmt::print("{} criterion {}: {} ({})\n", ok ? "PASS" : "FAIL", id, name, detail);
  std::fflush(stdout);
}

template <class Fn>
void guarded(int id, const std::string& name, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    verdict(id, false, name, fmt::format("exception: {}", e.what()));
  }
}

// max_k |a_k - b_k| / max_k |a_k| over trajectory rows.
double rel_traj_error(const Matrix& a, const Matrix& b) {
  double num = 0.0, den = 0.0;
  for (Index k = 0; k < a.rows(); ++k) {
    num = std::max(num, (a.row(k) - b.row(k)).norm());
    den = std::max(den, a.row(k).norm());
  }
  return num / std::max(den, 1e-300);
}

Matrix lifted_states(const Trajectory& tr, const Matrix& V) { return tr.states * V.transpose(); }

// One warm-up each, then `repeats` rounds running every job once; per-job medians.
std::vector<double> interleaved_medians(int repeats, const std::vector<std::function<void()>>& jobs) {
  for (const auto& job : jobs) job();
  std::vector<std::vector<double>> t(jobs.size());
  for (int i = 0; i < repeats; ++i)
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      const auto a = Clock::now();
      jobs[j]();
      t[j].push_back(seconds_since(a));
    }
  std::vector<double> med;
  for (auto& v : t) {
    std::sort(v.begin(), v.end());
    med.push_back(v[v.size() / 2]);
  }
  return med;
}

NlphSystem ladder(int stages) {
  LadderParams p;
  p.stages = stages;
  p.C0 = 1e-9;
  return ladder_network(p);
}

NlphSystem toda(int particles) {
  TodaParams p;
  p.particles = particles;
  return toda_lattice(p);
}

SnapshotSet training_snapshots(const NlphSystem& sys, const Trajectory& tr) {
  const WeightedMetric w = linearize(sys).metric;
  return snapshots_from_trajectory(sys, tr, 1, &w);
}

RunConfig method_config(Method m, Index r, Index m_deim) {
  RunConfig c;
  c.method = m;
  c.r = r;
  c.m = m_deim;
  if (m == Method::Hybrid) {
    c.r_pod = r / 2;
    c.r_h2 = r - r / 2;
  }
  return c;
}

// ---------------------------------------------------------------------------

void structure_suite() {
  const auto t0 = Clock::now();
  struct Case {
    std::string name;
    NlphSystem sys;
    InputFn train, forced;
    TimeSpan span;
    IntegratorConfig ic;
    Index r, m;
  };
  IntegratorConfig ladder_ic, toda_ic;
  ladder_ic.dt = 0.005;
  toda_ic.dt = 0.1;
  std::vector<Case> cases;
  {
    NlphSystem s = ladder(10);
    const Index p = s.ports();
    cases.push_back({"ladder10", std::move(s), on_port(gaussian_pulse({}), p),
                     on_port(sinusoid(1.0, 2.0), p), {0.0, 3.0}, ladder_ic, 4, 8});
  }
  {
    NlphSystem s = toda(50);
    const Index p = s.ports();
    cases.push_back({"toda50", std::move(s), on_port(constant_signal(0.1), p),
                     on_port(sinusoid(0.1, 1.0), p), {0.0, 20.0}, toda_ic, 6, 12});
  }
  const std::vector<Method> methods{Method::Pod, Method::H2eps, Method::Hybrid, Method::PodDeim,
                                    Method::H2epsDeim};
  bool ok = true;
  std::string worst;
  double worst_bio = 0.0, worst_margin = 0.0, worst_psd = 0.0;
  for (const Case& c : cases) {
    const Trajectory tr = simulate(c.sys, c.train, c.span, c.ic);
    const SnapshotSet snaps = training_snapshots(c.sys, tr);
    for (Method m : methods) {
      const ReductionOutcome out = run_reduction(method_config(m, c.r, c.m), c.sys, snaps);
      const Matrix Jr = out.reduced.Jr(), Rr = out.reduced.Rr();
      const bool skew = (Jr + Jr.transpose()).cwiseAbs().maxCoeff() == 0.0;
      Eigen::SelfAdjointEigenSolver<Matrix> es(Rr);
      const double min_eig = es.eigenvalues().minCoeff();
      const double psd = min_eig / std::max(Rr.norm(), 1e-300);
      const double bio =
          (out.basis.W.transpose() * out.basis.V - Matrix::Identity(out.basis.rank(), out.basis.rank()))
              .norm();
      const Trajectory rt = simulate_reduced(out.reduced, c.forced, c.span, c.ic);
      double hmax = 0.0;
      for (Index k = 0; k <= rt.steps(); ++k)
        hmax = std::max(hmax, std::abs(out.reduced.system.hamiltonian(rt.state(k))));
      const double margin = dissipation_margin(rt, out.reduced.system) / std::max(hmax, 1e-300);
      const bool pass = skew && min_eig >= -1e-10 * Rr.norm() && bio <= 1e-10 && margin >= -1e-6;
      if (!pass) {
        ok = false;
        worst += fmt::format(" {}:{}", c.name, to_string(m));
      }
      worst_bio = std::max(worst_bio, bio);
      worst_margin = std::min(worst_margin, margin);
      worst_psd = std::min(worst_psd, psd);
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  verdict(1, ok, "structure preservation, 5 methods x {ladder N=10, Toda N=50}",
          fmt::format("max |W^T V - I|_F = {:.2e}, min rel eig R_r = {:.2e}, min margin/max|H| = "
                      "{:.2e}, {:.1f} s{}",
                      worst_bio, worst_psd, worst_margin, secs,
                      worst.empty() ? "" : ", failing:" + worst));
}

void interpolation_conditions() {
  const auto t0 = Clock::now();
  const NlphSystem sys = ladder(10);
  const LinearPhModel lin = linearize(sys);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> re(0.5, 20.0), im(1.0, 40.0), dir(-1.0, 1.0);
  std::vector<Complex> shifts;
  std::vector<ComplexVector> dirs;
  auto rand_dir = [&] {
    ComplexVector b(sys.ports());
    for (Index i = 0; i < b.size(); ++i) b(i) = Complex(dir(rng), 0.0);
    return b;
  };
  for (int i = 0; i < 2; ++i) {
    shifts.emplace_back(re(rng), 0.0);
    dirs.push_back(rand_dir());
  }
  for (int i = 0; i < 2; ++i) {
    const Complex s(re(rng), im(rng));
    ComplexVector b(sys.ports());
    for (Index j = 0; j < b.size(); ++j) b(j) = Complex(dir(rng), dir(rng));
    shifts.push_back(s);
    dirs.push_back(b);
    shifts.push_back(std::conj(s));
    dirs.push_back(b.conjugate());
  }
  const Matrix V = q_orthonormalize(interpolatory_basis(lin, shifts, dirs), lin.metric);
  const Matrix W = lin.metric.apply(V);
  Matrix Jr, Rr, Br;
  NlphSystem lsys;
  lsys.J = lin.J;
  lsys.R = lin.R;
  lsys.B = lin.B;
  project_matrices(lsys, W, Jr, Rr, Br);
  const Matrix Qr = V.transpose() * lin.metric.apply(V);
  double worst = 0.0;
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    const ComplexVector full = transfer_eval(lin, shifts[i]) * dirs[i];
    const ComplexVector red = transfer_eval_dense(Jr - Rr, Qr, Br, shifts[i]) * dirs[i];
    worst = std::max(worst, (full - red).norm() / full.norm());
  }
  const double secs = seconds_since(t0);
  verdict(2, worst <= 1e-8 && secs < 60.0, "tangential interpolation at 6 random shifts",
          fmt::format("max relative residual {:.2e}, {:.2f} s", worst, secs));
}

void exact_recovery() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  auto rand_matrix = [&](Index r, Index c) {
    Matrix M(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) M(i, j) = nd(rng);
    return M;
  };
  double worst_full = 0.0, worst_deim = 0.0;
  struct Case {
    NlphSystem sys;
    InputFn u;
    TimeSpan span;
    double dt;
  };
  std::vector<Case> cases;
  {
    NlphSystem s = ladder(10);
    const Index p = s.ports();
    cases.push_back({std::move(s), on_port(gaussian_pulse({}), p), {0.0, 3.0}, 0.005});
  }
  {
    NlphSystem s = toda(50);
    const Index p = s.ports();
    cases.push_back({std::move(s), on_port(sinusoid(0.1, 1.0), p), {0.0, 20.0}, 0.1});
  }
  for (const Case& c : cases) {
    IntegratorConfig ic;
    ic.dt = c.dt;
    ic.newton_tol = 1e-14;
    const Index n = c.sys.dim();
    const Trajectory full = simulate(c.sys, c.u, c.span, ic);

    // r = n with a random invertible basis.
    const ReductionBasis square = biorthonormalize(rand_matrix(n, n), rand_matrix(n, n));
    const ReducedSystem rn = project_ph(c.sys, square);
    const Trajectory tr = simulate_reduced(rn, c.u, c.span, ic);
    worst_full = std::max(worst_full, rel_traj_error(full.states, lifted_states(tr, square.V)));

    // m = n DEIM against the exact-lifted model on the same basis.
    const HamiltonianSplit split = build_split(c.sys, linearize(c.sys).Q);
    const SnapshotSet snaps = snapshots_from_trajectory(c.sys, full, 1, &split.metric);
    const ReductionBasis basis = normalize_basis(pod_ph_bases(snaps, 4), split.metric);
    const DeimModel dm = make_deim_model(q_orthonormalize(rand_matrix(n, n), split.metric));
    const Trajectory exact = simulate_reduced(project_ph(c.sys, basis), c.u, c.span, ic);
    const Trajectory deim = simulate_reduced(deim_reduce(c.sys, split, basis, dm), c.u, c.span, ic);
    worst_deim = std::max(worst_deim, rel_traj_error(exact.states, deim.states));
  }
  const double secs = seconds_since(t0);
  verdict(3, worst_full <= 1e-10 && worst_deim <= 1e-10,
          "exact recovery at r = n and m = n (ladder N=10, Toda N=50)",
          fmt::format("r=n rel error {:.2e}, m=n rel error {:.2e}, {:.1f} s", worst_full,
                      worst_deim, secs));
}

struct LadderExperiment {
  NlphSystem sys = ladder(50);
  TimeSpan span{0.0, 6.0};
  IntegratorConfig ic;
  InputFn train, test;
  Trajectory full_train, full_test;
  SnapshotSet snaps;
  WeightedMetric metric;

  LadderExperiment() {
    ic.dt = 0.005;
    train = on_port(gaussian_pulse({}), sys.ports());
    test = on_port(sinusoid(1.0, 2.0), sys.ports());
    full_train = simulate(sys, train, span, ic);
    full_test = simulate(sys, test, span, ic);
    metric = linearize(sys).metric;
    snaps = snapshots_from_trajectory(sys, full_train, 1, &metric);
  }

  // A reduced run that diverges or stalls Newton counts as infinite error.
  double error(const ReductionOutcome& out, const InputFn& u, const Trajectory& full) const {
    try {
      const Trajectory rt = simulate_reduced(out.reduced, u, span, ic);
      return error_metrics(full, rt, out.basis.V, metric).avg_rel_output_error;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Convergence && e.code() != ErrorCode::Divergence &&
          e.code() != ErrorCode::Evaluation)
        throw;
      return std::numeric_limits<double>::infinity();
    }
  }

  std::pair<double, double> errors(const ReductionOutcome& out) const {
    return {error(out, train, full_train), error(out, test, full_test)};
  }
};

void hybrid_superiority(const LadderExperiment& L) {
  const auto t0 = Clock::now();
  const auto pod = L.errors(run_reduction(method_config(Method::Pod, 12, 0), L.sys, L.snaps));
  const auto h2 = L.errors(run_reduction(method_config(Method::H2eps, 12, 0), L.sys, L.snaps));
  const auto hyb = L.errors(run_reduction(method_config(Method::Hybrid, 12, 0), L.sys, L.snaps));
  const double ratio_train = hyb.first / std::min(pod.first, h2.first);
  const double ratio_test = hyb.second / std::min(pod.second, h2.second);
  const double secs = seconds_since(t0);
  verdict(4, ratio_train <= 0.5 && ratio_test <= 0.5 && secs < 600.0,
          "hybrid 6+6 vs pure POD / H2 at r=12, ladder N=50",
          fmt::format("training: pod {:.3e} h2 {:.3e} hybrid {:.3e} ratio {:.3f}; "
                      "sinusoid: pod {:.3e} h2 {:.3e} hybrid {:.3e} ratio {:.3f}; {:.1f} s",
                      pod.first, h2.first, hyb.first, ratio_train, pod.second, h2.second,
                      hyb.second, ratio_test, secs));
}

void deim_tracking(const LadderExperiment& L) {
  const auto t0 = Clock::now();
  const Index r = 6;
  const auto pod = L.errors(run_reduction(method_config(Method::Pod, r, 0), L.sys, L.snaps));
  std::vector<std::pair<double, double>> e;
  for (Index m : {r, 2 * r, 3 * r, 4 * r})
    e.push_back(L.errors(run_reduction(method_config(Method::PodDeim, r, m), L.sys, L.snaps)));
  bool monotone = true;
  for (std::size_t k = 1; k < e.size(); ++k)
    monotone = monotone && e[k].first <= 1.2 * e[k - 1].first && e[k].second <= 1.2 * e[k - 1].second;
  const bool within = e[2].first <= 2.0 * pod.first && e[2].second <= 2.0 * pod.second;
  const double secs = seconds_since(t0);
  verdict(5, within && monotone && secs < 600.0, "POD-DEIM error tracking, ladder N=50, r=6",
          fmt::format("POD {:.3e}/{:.3e}; m=6,12,18,24 -> {:.3e}/{:.3e}, {:.3e}/{:.3e}, "
                      "{:.3e}/{:.3e}, {:.3e}/{:.3e} (training/sinusoid); {:.1f} s",
                      pod.first, pod.second, e[0].first, e[0].second, e[1].first, e[1].second,
                      e[2].first, e[2].second, e[3].first, e[3].second, secs));
}

void deim_speedup() {
  const auto t0 = Clock::now();
  const NlphSystem sys = toda(1000);
  IntegratorConfig ic;
  ic.dt = 0.1;
  // Long enough for the remainder snapshots to reach rank >= m.
  const TimeSpan span{0.0, 200.0};
  const InputFn u = on_port(constant_signal(0.1), sys.ports());
  Trajectory full = simulate(sys, u, span, ic);
  const SnapshotSet snaps = training_snapshots(sys, full);
  const ReductionOutcome pod = run_reduction(method_config(Method::Pod, 30, 0), sys, snaps);
  const ReductionOutcome deim = run_reduction(method_config(Method::PodDeim, 30, 90), sys, snaps);
  // Interleave the three runs so machine drift hits them alike.
  const auto times = interleaved_medians(
      5, {[&] { full = simulate(sys, u, span, ic); },
          [&] { simulate_reduced(pod.reduced, u, span, ic); },
          [&] { simulate_reduced(deim.reduced, u, span, ic); }});
  const double t_full = times[0], t_pod = times[1], t_deim = times[2];
  const double secs = seconds_since(t0);
  verdict(6, t_deim <= 0.1 * t_full && t_deim <= t_pod && secs < 1800.0,
          "POD-DEIM online speedup, Toda N=1000, r=30, m=90",
          fmt::format("full {:.4f} s, POD-PH {:.4f} s, POD-DEIM {:.4f} s, reduction {:.1f}%, {:.1f} s",
                      t_full, t_pod, t_deim, 100.0 * (1.0 - t_deim / t_full), secs));
}

NlphSystem random_linear_ph(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Matrix A(n, n), G(n, n), M(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      A(i, j) = nd(rng);
      G(i, j) = nd(rng);
      M(i, j) = nd(rng);
    }
  const Matrix J = A - A.transpose();
  const Matrix R = 0.1 * G * G.transpose();
  const Matrix Q = M * M.transpose() / static_cast<double>(n) + Matrix::Identity(n, n);
  Matrix B(n, 1);
  for (Index i = 0; i < n; ++i) B(i, 0) = nd(rng);
  NlphSystem s;
  s.name = "linear";
  s.J = to_sparse(J);
  s.R = to_sparse(R);
  s.B = B;
  s.hamiltonian = [Q](const Vector& x) { return 0.5 * x.dot(Q * x); };
  s.grad = [Q](const Vector& x) { return Vector(Q * x); };
  const SparseMatrix Qs = to_sparse(Q);
  s.hess = [Qs](const Vector&) { return Qs; };
  return s;
}

void bound_validity() {
  const auto t0 = Clock::now();
  const NlphSystem sys = random_linear_ph(8, 2024);
  IntegratorConfig ic;
  ic.dt = 0.001;
  const TimeSpan span{0.0, 5.0};
  const InputFn u = on_port(sinusoid(1.0, 1.0), 1);
  const Trajectory full = simulate(sys, u, span, ic);
  const SnapshotSet snaps = snapshots_from_trajectory(sys, full, 1);
  const ReductionBasis basis = pod_ph_bases(snaps, 3);
  const ReducedSystem red = project_ph(sys, basis);
  const Trajectory rt = simulate_reduced(red, u, span, ic, init_reduced_state(basis, full.state(0)));
  BoundOptions bo;
  bo.method = LipschitzMethod::ExactLinear;
  const WeightedMetric metric = linearize(sys).metric;
  const BoundReport b = projection_bound_report(sys, basis, metric, full, rt, bo);
  const bool proj_ok = b.state_holds(0.01) && b.output_holds(0.01);

  // Projector inequality on Toda remainder-gradient snapshots.
  const NlphSystem td = toda(1000);
  IntegratorConfig tic;
  tic.dt = 0.1;
  const HamiltonianSplit split = build_split(td, linearize(td).Q);
  const Trajectory ttr = simulate(td, on_port(constant_signal(0.1), 1), {0.0, 50.0}, tic);
  const Trajectory tte = simulate(td, on_port(sinusoid(0.1, 1.0), 1), {0.0, 50.0}, tic);
  const SnapshotSet s_tr = snapshots_from_trajectory(td, ttr, 1, &split.metric);
  const SnapshotSet s_te = snapshots_from_trajectory(td, tte, 1, &split.metric);
  const DeimModel dm = deim_basis_from_snapshots(s_tr.G, 20, split.metric);
  Matrix samples(s_tr.G.rows(), s_tr.G.cols() + s_te.G.cols());
  samples << s_tr.G, s_te.G;
  const DeimLemmaReport lem = deim_lemma_bound(dm, split.metric, samples);
  const double secs = seconds_since(t0);
  verdict(7, proj_ok && lem.violations == 0,
          "error bounds: linear n=8 r=3 T=5, DEIM projector m=20 on Toda",
          fmt::format("state {:.3e} <= {:.3e}, output {:.3e} <= {:.3e}; |P|_Q = {:.3f}, "
                      "{} of {} snapshots violate; {:.1f} s",
                      b.measured_state, b.state_bound, b.measured_output, b.output_bound,
                      lem.projector_q_norm, lem.violations, samples.cols(), secs));
}

// Fourth-order central differences.
Vector fd_grad(const ScalarFn& H, const Vector& x, const Vector& h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    auto at = [&](double s) {
      Vector y = x;
      y(i) += s * h(i);
      return H(y);
    };
    g(i) = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h(i));
  }
  return g;
}

Matrix fd_jac(const VectorFn& F, const Vector& x, const Vector& h) {
  Matrix Jm(x.size(), x.size());
  for (Index i = 0; i < x.size(); ++i) {
    auto at = [&](double s) {
      Vector y = x;
      y(i) += s * h(i);
      return F(y);
    };
    Jm.col(i) = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h(i));
  }
  return Jm;
}

void derivative_consistency() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  double worst_grad = 0.0, worst_hess = 0.0, worst_split = 0.0;

  LadderParams lp;
  lp.stages = 20;
  lp.C0 = 1e-9;
  const NlphSystem lad = ladder_network(lp);
  const double C = lp.C0 * 1e6, L = lp.L0 * 1e6;
  Vector lscale(lad.dim());
  lscale << Vector::Constant(lp.stages, C * lp.V0), Vector::Constant(lp.stages, L);

  const NlphSystem td = toda(20);
  const Vector tscale = Vector::Ones(td.dim());

  for (const auto& [sys, scale] : {std::pair{&lad, lscale}, std::pair{&td, tscale}}) {
    for (int k = 0; k < 100; ++k) {
      Vector x(sys->dim());
      for (Index i = 0; i < x.size(); ++i) x(i) = ud(rng) * scale(i);
      const Vector h = 1e-3 * scale;
      const Vector g = sys->grad(x);
      worst_grad = std::max(worst_grad, (g - fd_grad(sys->hamiltonian, x, h)).norm() / g.norm());
      const Matrix Hs = Matrix(sys->hess(x));
      worst_hess = std::max(worst_hess, (Hs - fd_jac(sys->grad, x, h)).norm() / Hs.norm());
      if (sys->split) {
        const double H = sys->hamiltonian(x);
        const double Hsplit = 0.5 * x.dot(sys->split->Q * x) + sys->split->h(x);
        worst_split = std::max(worst_split, std::abs(H - Hsplit) / std::max(1.0, std::abs(H)));
      }
    }
  }
  const double secs = seconds_since(t0);
  verdict(8, worst_grad <= 1e-5 && worst_hess <= 1e-5 && worst_split <= 1e-10,
          "gradient/Hessian finite-difference checks and Toda split identity",
          fmt::format("grad {:.2e}, Hessian {:.2e}, split {:.2e} over 100 points per model; {:.1f} s",
                      worst_grad, worst_hess, worst_split, secs));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism() {
  const auto t0 = Clock::now();
  const std::string cfg_text = R"({
    "model": {"type": "ladder", "stages": 10, "C0": 1e-9},
    "time": {"t0": 0, "t1": 2, "dt": 0.01},
    "reduction": {"method": "pod", "r": 4, "m": 8},
    "timing": {"enabled": false},
    "sweep": {"methods": ["pod", "h2eps", "hybrid", "pod-deim", "h2eps-deim"],
              "r": [2, 4], "m": [4, 8], "splits": [[2, 2]]},
    "seed": 42, "threads": 2
  })";
  const auto base = std::filesystem::temp_directory_path() / "phred_acceptance_sweep";
  std::filesystem::remove_all(base);
  std::vector<std::string> outputs;
  for (int rep = 0; rep < 2; ++rep) {
    RunConfig cfg = parse_config(cfg_text);
    cfg.out_dir = (base / fmt::format("run{}", rep)).string();
    cmd_sweep(cfg);
    outputs.push_back(slurp(std::filesystem::path(cfg.out_dir) / "sweep.csv"));
  }
  const bool same = outputs[0] == outputs[1] && !outputs[0].empty();
  const auto lines = std::count(outputs[0].begin(), outputs[0].end(), '\n');
  verdict(9, same, "repeated sweep output is byte-identical",
          fmt::format("{} lines, {} bytes, {:.1f} s", lines, outputs[0].size(), seconds_since(t0)));
}

}  // namespace

int main() {
  guarded(1, "structure preservation", structure_suite);
  guarded(2, "tangential interpolation", interpolation_conditions);
  guarded(3, "exact recovery", exact_recovery);
  try {
    const LadderExperiment L;
    guarded(4, "hybrid superiority", [&] { hybrid_superiority(L); });
    guarded(5, "DEIM error tracking", [&] { deim_tracking(L); });
  } catch (const std::exception& e) {
    verdict(4, false, "hybrid superiority", fmt::format("setup failed: {}", e.what()));
    verdict(5, false, "DEIM error tracking", fmt::format("setup failed: {}", e.what()));
  }
  guarded(6, "DEIM speedup", deim_speedup);
  guarded(7, "error bounds", bound_validity);
  guarded(8, "derivative consistency", derivative_consistency);
  guarded(9, "determinism", determinism);
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
