// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "phred/core.hpp"

#include <random>

namespace testutil {

using phred::Index;
using phred::Matrix;
using phred::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> nd;
  Matrix M(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) M(i, j) = nd(rng);
  return M;
}

inline Vector random_vector(std::mt19937_64& rng, Index n) { return random_matrix(rng, n, 1); }

inline Matrix random_spd(std::mt19937_64& rng, Index n) {
  const Matrix A = random_matrix(rng, n, n);
  return A * A.transpose() / static_cast<double>(n) + 0.5 * Matrix::Identity(n, n);
}

/// Linear port-Hamiltonian system with H = 1/2 x^T Q x.
inline phred::NlphSystem linear_ph(const Matrix& J, const Matrix& R, const Matrix& Q,
                                   const Matrix& B) {
  phred::NlphSystem s;
  s.name = "linear";
  s.J = phred::to_sparse(J);
  s.R = phred::to_sparse(R);
  s.B = B;
  s.hamiltonian = [Q](const Vector& x) { return 0.5 * x.dot(Q * x); };
  s.grad = [Q](const Vector& x) { return Vector(Q * x); };
  const phred::SparseMatrix Qs = phred::to_sparse(Q);
  s.hess = [Qs](const Vector&) { return Qs; };
  return s;
}

inline phred::NlphSystem random_linear_ph(std::mt19937_64& rng, Index n, Index m) {
  const Matrix A = random_matrix(rng, n, n);
  const Matrix G = random_matrix(rng, n, n);
  return linear_ph(A - A.transpose(), 0.1 * G * G.transpose(), random_spd(rng, n),
                   random_matrix(rng, n, m));
}

/// Fourth-order central differences of a scalar function, step h per coordinate.
inline Vector fd_gradient(const phred::ScalarFn& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    auto at = [&](double s) {
      Vector y = x;
      y(i) += s * h;
      return f(y);
    };
    g(i) = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h);
  }
  return g;
}

}  // namespace testutil
