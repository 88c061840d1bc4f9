// SPDX-License-Identifier: Apache-2.0
#include "phred/models.hpp"

#include "phred/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>

namespace phred {

namespace {

constexpr double kSeriesCutoff = 1e-2;

SparseMatrix from_triplets(Index n, const std::vector<Eigen::Triplet<double>>& t) {
  SparseMatrix M(n, n);
  M.setFromTriplets(t.begin(), t.end());
  M.makeCompressed();
  return M;
}

}  // namespace

// Taylor coefficients 1/k! from k = 2 on; degree 13 leaves a truncation
// error below 1e-16 relative on |z| < 1e-2.
double psi_series(double z) {
  double acc = 0.0;
  double fact = 1.0;
  for (int k = 2; k <= 13; ++k) fact *= k;
  for (int k = 13; k >= 3; --k) {
    acc = acc * z + 1.0 / fact;
    fact /= k;
  }
  return acc * z * z * z;
}

double psi_d1_series(double z) {
  double acc = 0.0;
  double fact = 1.0;
  for (int k = 2; k <= 12; ++k) fact *= k;
  for (int k = 12; k >= 2; --k) {
    acc = acc * z + 1.0 / fact;
    fact /= k;
  }
  return acc * z * z;
}

double psi_direct(double z) { return std::expm1(z) - z - 0.5 * z * z; }
double psi_d1_direct(double z) { return std::expm1(z) - z; }

double psi(double z) { return std::abs(z) < kSeriesCutoff ? psi_series(z) : psi_direct(z); }
double psi_d1(double z) {
  return std::abs(z) < kSeriesCutoff ? psi_d1_series(z) : psi_d1_direct(z);
}
double psi_d2(double z) { return std::expm1(z); }

double toda_phi(double z) {
  if (std::abs(z) < kSeriesCutoff) {
    double acc = 0.0;
    double fact = 1.0;
    for (int k = 2; k <= 13; ++k) fact *= k;
    for (int k = 13; k >= 3; --k) {
      acc = acc * z + 1.0 / fact;
      fact /= k;
    }
    return acc;
  }
  return psi_direct(z) / (z * z * z);
}

NlphSystem ladder_network(const LadderParams& p) {
  if (p.stages < 1 || !(p.L0 > 0) || !(p.C0 > 0) || !(p.V0 > 0) || !(p.R0 > 0) || !(p.G0 > 0))
    throw Error(ErrorCode::Config, "ladder parameters must be positive");
  const Index N = p.stages;
  const Index n = 2 * N;
  // Scaled units: microhenry, microfarad.
  const double L = p.L0 * 1e6;
  const double C = p.C0 * 1e6;
  const double V0 = p.V0;
  const double CV = C * V0;

  std::vector<Eigen::Triplet<double>> jt, rt;
  for (Index k = 0; k < N; ++k) {
    jt.emplace_back(k, N + k, 1.0);
    jt.emplace_back(N + k, k, -1.0);
    if (k + 1 < N) {
      jt.emplace_back(k, N + k + 1, -1.0);
      jt.emplace_back(N + k + 1, k, 1.0);
    }
    rt.emplace_back(k, k, p.G0);
    rt.emplace_back(N + k, N + k, p.R0);
  }

  NlphSystem sys;
  sys.name = fmt::format("ladder(N={})", N);
  sys.J = from_triplets(n, jt);
  sys.R = from_triplets(n, rt);
  sys.B = Matrix::Zero(n, 2);
  sys.B(N, 0) = 1.0;
  sys.B(N - 1, 1) = 1.0;

  sys.hamiltonian = [N, L, C, V0, CV](const Vector& x) {
    double H = 0.0;
    for (Index k = 0; k < N; ++k) {
      const double z = x(k) / CV;
      // C V0^2 (e^z - 1) - Q V0 = C V0^2 (e^z - 1 - z)
      H += C * V0 * V0 * psi_d1(z) + x(N + k) * x(N + k) / (2.0 * L);
    }
    return H;
  };
  sys.grad = [N, L, V0, CV](const Vector& x) {
    Vector g(2 * N);
    for (Index k = 0; k < N; ++k) {
      g(k) = V0 * std::expm1(x(k) / CV);
      g(N + k) = x(N + k) / L;
    }
    return g;
  };
  sys.hess = [N, L, C, CV](const Vector& x) {
    SparseMatrix Hs(2 * N, 2 * N);
    Hs.reserve(Eigen::VectorXi::Ones(2 * N));
    for (Index k = 0; k < N; ++k) {
      Hs.insert(k, k) = std::exp(x(k) / CV) / C;
      Hs.insert(N + k, N + k) = 1.0 / L;
    }
    Hs.makeCompressed();
    return Hs;
  };

  NativeSplit split;
  std::vector<Eigen::Triplet<double>> qt;
  for (Index k = 0; k < N; ++k) {
    qt.emplace_back(k, k, 1.0 / C);
    qt.emplace_back(N + k, N + k, 1.0 / L);
  }
  split.Q = from_triplets(n, qt);
  split.h = [N, C, V0, CV](const Vector& x) {
    double h = 0.0;
    for (Index k = 0; k < N; ++k) h += C * V0 * V0 * psi(x(k) / CV);
    return h;
  };
  split.grad = [N, V0, CV](const Vector& x) {
    Vector g = Vector::Zero(2 * N);
    for (Index k = 0; k < N; ++k) g(k) = V0 * psi_d1(x(k) / CV);
    return g;
  };
  split.stencil = [](Index i) { return std::vector<Index>{i}; };
  split.component = [N, C, V0, CV](Index i, std::span<const double> v, std::span<double> d) {
    if (i >= N) {
      if (!d.empty()) d[0] = 0.0;
      return 0.0;
    }
    const double z = v[0] / CV;
    if (!d.empty()) d[0] = psi_d2(z) / C;
    return V0 * psi_d1(z);
  };
  sys.split = std::move(split);
  return sys;
}

NlphSystem toda_lattice(const TodaParams& p) {
  if (p.particles < 2) throw Error(ErrorCode::Config, "Toda lattice needs at least 2 particles");
  const Index N = p.particles;
  const Index n = 2 * N;
  Vector gamma = Vector::Constant(N, 0.1);
  if (!p.damping.empty()) {
    if (static_cast<Index>(p.damping.size()) != N)
      throw Error(ErrorCode::Config,
                  fmt::format("damping has {} entries, expected {}", p.damping.size(), N));
    for (Index k = 0; k < N; ++k) gamma(k) = p.damping[k];
  }
  if ((gamma.array() < 0.0).any()) throw Error(ErrorCode::Config, "damping must be nonnegative");

  std::vector<Eigen::Triplet<double>> jt, rt, qt;
  for (Index k = 0; k < N; ++k) {
    jt.emplace_back(k, N + k, 1.0);
    jt.emplace_back(N + k, k, -1.0);
    if (gamma(k) != 0.0) rt.emplace_back(N + k, N + k, gamma(k));
    qt.emplace_back(k, k, k == 0 ? 1.0 : 2.0);
    if (k + 1 < N) {
      qt.emplace_back(k, k + 1, -1.0);
      qt.emplace_back(k + 1, k, -1.0);
    }
    qt.emplace_back(N + k, N + k, 1.0);
  }

  NlphSystem sys;
  sys.name = fmt::format("toda(N={})", N);
  sys.J = from_triplets(n, jt);
  sys.R = from_triplets(n, rt);
  sys.B = Matrix::Zero(n, 1);
  sys.B(N, 0) = 1.0;

  // g_k = q_k - q_{k+1} for k < N-1 and g_{N-1} = q_{N-1}; every potential
  // term is a function of one g_k.
  auto gap = [N](const Vector& x, Index k) { return k + 1 < N ? x(k) - x(k + 1) : x(k); };

  sys.hamiltonian = [N, gap](const Vector& x) {
    double H = 0.0;
    for (Index k = 0; k < N; ++k) H += 0.5 * x(N + k) * x(N + k) + std::expm1(gap(x, k));
    return H - x(0);
  };
  sys.grad = [N, gap](const Vector& x) {
    Vector g(2 * N);
    double prev = 0.0;  // e^{g_{k-1}}, or 1 standing in for the -q_1 term
    for (Index k = 0; k < N; ++k) {
      const double e = std::exp(gap(x, k));
      g(k) = e - (k == 0 ? 1.0 : prev);
      prev = e;
      g(N + k) = x(N + k);
    }
    return g;
  };
  sys.hess = [N, gap](const Vector& x) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * N);
    double prev = 0.0;
    for (Index k = 0; k < N; ++k) {
      const double e = std::exp(gap(x, k));
      t.emplace_back(k, k, e + prev);
      if (k + 1 < N) {
        t.emplace_back(k, k + 1, -e);
        t.emplace_back(k + 1, k, -e);
      }
      prev = e;
      t.emplace_back(N + k, N + k, 1.0);
    }
    SparseMatrix Hs(2 * N, 2 * N);
    Hs.setFromTriplets(t.begin(), t.end());
    return Hs;
  };

  NativeSplit split;
  split.Q = from_triplets(n, qt);
  split.h = [N, gap](const Vector& x) {
    double h = 0.0;
    for (Index k = 0; k < N; ++k) h += psi(gap(x, k));
    return h;
  };
  split.grad = [N, gap](const Vector& x) {
    Vector g = Vector::Zero(2 * N);
    double prev = 0.0;
    for (Index k = 0; k < N; ++k) {
      const double d = psi_d1(gap(x, k));
      g(k) = d - prev;
      prev = d;
    }
    return g;
  };
  split.stencil = [N](Index i) {
    if (i >= N) return std::vector<Index>{i};
    std::vector<Index> s;
    if (i > 0) s.push_back(i - 1);
    s.push_back(i);
    if (i + 1 < N) s.push_back(i + 1);
    return s;
  };
  split.component = [N](Index i, std::span<const double> v, std::span<double> d) {
    if (i >= N) {
      if (!d.empty()) d[0] = 0.0;
      return 0.0;
    }
    // v holds q_{i-1} (if i > 0), q_i, q_{i+1} (if i < N-1).
    const std::size_t c = i > 0 ? 1 : 0;
    const double qi = v[c];
    const double gi = i + 1 < N ? qi - v[c + 1] : qi;
    double value = psi_d1(gi);
    double dprev = 0.0;
    if (i > 0) {
      const double gprev = v[0] - qi;
      value -= psi_d1(gprev);
      dprev = psi_d2(gprev);
    }
    if (!d.empty()) {
      const double dcur = psi_d2(gi);
      if (i > 0) d[0] = -dprev;
      d[c] = dcur + dprev;
      if (i + 1 < N) d[c + 1] = -dcur;
    }
    return value;
  };
  sys.split = std::move(split);
  return sys;
}

SignalFn gaussian_pulse(const GaussianPulse& g) {
  if (!(g.window > 0.0)) throw Error(ErrorCode::Config, "pulse window must be positive");
  return [g](double t) {
    if (t < 0.0 || t > g.window) return 0.0;
    const double z = (t - g.center) / g.sigma;
    return g.magnitude * std::exp(-0.5 * z * z);
  };
}

SignalFn sinusoid(double amplitude, double omega, double phase) {
  return [=](double t) { return amplitude * std::sin(omega * t + phase); };
}

SignalFn constant_signal(double value) {
  return [value](double) { return value; };
}

InputFn on_port(SignalFn signal, Index ports, Index port) {
  if (port < 0 || port >= ports)
    throw Error(ErrorCode::Config, fmt::format("port {} out of range [0, {})", port, ports));
  return [signal = std::move(signal), ports, port](double t) {
    Vector u = Vector::Zero(ports);
    u(port) = signal(t);
    return u;
  };
}

std::map<std::string, SignalFn> standard_inputs() {
  return {
      {"const_0p1", constant_signal(0.1)},
      {"sin_0p1", sinusoid(0.1, 1.0)},
      {"gaussian", gaussian_pulse(GaussianPulse{})},
      {"sinusoid_ladder", sinusoid(1.0, 2.0)},
  };
}

}  // namespace phred
