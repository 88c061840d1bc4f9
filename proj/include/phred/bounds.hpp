// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "phred/basis.hpp"
#include "phred/core.hpp"
#include "phred/deim.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace phred {

enum class LipschitzMethod { SampledPairs, HessianSup, ExactLinear };
const char* to_string(LipschitzMethod m);

/// A map F: R^n -> R^n described by whatever the chosen estimator needs:
/// values for sampled pairs, a Jacobian for the Hessian-sup estimate, the
/// matrix itself when F is linear.
struct MapSpec {
  VectorFn value;
  std::function<Matrix(const Vector&)> jacobian;
  Matrix linear;
};

struct SampleSet {
  std::vector<Vector> points;
  /// Index pairs into `points`; empty means every pair i < j.
  std::vector<std::pair<Index, Index>> pairs;
};

struct LipschitzEstimate {
  double value = 0.0;
  LipschitzMethod method = LipschitzMethod::SampledPairs;
  Index samples = 0;
  /// Sampled estimates are lower bounds of the supremum.
  bool lower_bound = true;
};

LipschitzEstimate lipschitz(const MapSpec& F, const WeightedMetric& metric,
                            const SampleSet& samples, LipschitzMethod method);
LipschitzEstimate log_lipschitz(const MapSpec& F, const WeightedMetric& metric,
                                const SampleSet& samples, LipschitzMethod method);

/// Columns of `states` plus `copies` Gaussian perturbations of each, with
/// standard deviation `rel` times the largest absolute state entry.
std::vector<Vector> sample_cloud(const Matrix& states, int copies, double rel, std::uint64_t seed);

/// int_0^T e^{2 a s} ds and its integral, with series evaluation near a = 0.
double c_alpha(double alpha, double T);
double C_alpha(double alpha, double T);

struct BoundReport {
  double eps_x2 = 0.0;  // int |(I - Pi_V) x|_Q^2
  double eps_F2 = 0.0;  // int |(I - Pi_W) grad H|_Q^2
  double alpha = 0.0, beta = 0.0, gamma = 0.0, delta = 0.0;
  double lipschitz_F = 0.0;
  double proj_norm = 0.0;            // |V W^T|_Q
  double proj_transpose_norm = 0.0;  // |W V^T|_Q
  double c_alpha = 0.0, C_alpha = 0.0;
  double Cx = 0.0, CF = 0.0, C0 = 0.0, Cx_hat = 0.0, CF_hat = 0.0, C0_hat = 0.0;
  double initial_deviation2 = 0.0;
  double state_bound = 0.0;
  double output_bound = 0.0;
  double measured_state = 0.0;   // int |x - V x_r|_Q^2
  double measured_output = 0.0;  // int |y - y_r|^2
  std::string alpha_method, lipschitz_method;
  double T = 0.0;

  bool state_holds(double slack = 0.0) const { return measured_state <= state_bound * (1 + slack); }
  bool output_holds(double slack = 0.0) const {
    return measured_output <= output_bound * (1 + slack);
  }
};

struct BoundOptions {
  LipschitzMethod method = LipschitzMethod::HessianSup;
  int cloud_copies = 10;
  double cloud_rel = 0.01;
  std::uint64_t seed = 0;
};

/// State and output bounds for a projection-reduced model. The basis is
/// rescaled internally so that V^T Q V = I; V W^T is unchanged.
BoundReport projection_bound_report(const NlphSystem& sys, const ReductionBasis& basis,
                                    const WeightedMetric& metric, const Trajectory& full,
                                    const Trajectory& reduced, const BoundOptions& opts = {});

struct DeimLemmaReport {
  double projector_q_norm = 0.0;
  Vector bound;     // |P|_Q |(I - U U^T Q) f|_Q per sample
  Vector measured;  // |f - P f|_Q per sample
  Index violations = 0;
};

/// |U (E^T U)^{-1} E^T|_Q evaluated as |(E^T U)^{-1} (L^{-1} E)^T|_2, valid when U^T Q U = I.
double deim_projector_q_norm(const DeimModel& model, const WeightedMetric& metric);

DeimLemmaReport deim_lemma_bound(const DeimModel& model, const WeightedMetric& metric,
                                 const Matrix& f_samples);

struct DeimBoundReport {
  double eps_h = 0.0;
  double rho_min = 0.0;
  double alpha = 0.0, beta = 0.0, gamma = 0.0, delta = 0.0;
  double log_lipschitz_G = 0.0;
  double lipschitz_h = 0.0;
  std::string method;
  std::vector<double> times;
  Vector state_bound, output_bound;
  Vector measured_state, measured_output;
  Index state_violations = 0;
  Index output_violations = 0;
};

/// Bounds on the gap between exact-lifted and DEIM reduced trajectories that
/// share `basis` (assumed to satisfy V^T Q V = I) and the time grid.
DeimBoundReport deim_reduction_bound(const NlphSystem& sys, const HamiltonianSplit& split,
                                     const ReductionBasis& basis, const DeimModel& model,
                                     const ReducedSystem& deim_system, const Trajectory& exact,
                                     const Trajectory& deim, const BoundOptions& opts = {});

}  // namespace phred
