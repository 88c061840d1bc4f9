// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "phred/core.hpp"
#include "phred/integrate.hpp"

#include <functional>
#include <map>
#include <string>

namespace phred {

/// Nonlinear RLC ladder. Parameters are SI; the built system works in
/// microseconds, volts, amperes, microcoulombs and volt-microseconds, so
/// inductance enters in microhenries and capacitance in microfarads.
struct LadderParams {
  int stages = 50;
  double L0 = 2e-6;   // H
  double C0 = 1e-6;   // F
  double V0 = 1.0;    // V
  double R0 = 1.0;    // Ohm
  double G0 = 1e-5;   // S
};

/// State [Q_1..Q_N, phi_1..phi_N]; ports are the left voltage source and
/// the right current injection.
NlphSystem ladder_network(const LadderParams& p);

struct TodaParams {
  int particles = 1000;
  std::vector<double> damping;  // empty: 0.1 for every particle
};

/// State [q; p]; single force input on the first particle.
NlphSystem toda_lattice(const TodaParams& p);

/// psi(z) = e^z - 1 - z - z^2/2 and its first two derivatives, switching to
/// a Taylor series for |z| < 1e-2.
double psi(double z);
double psi_d1(double z);
double psi_d2(double z);
/// Direct closed forms, exposed for branch-consistency checks.
double psi_direct(double z);
double psi_d1_direct(double z);
double psi_series(double z);
double psi_d1_series(double z);
/// phi(z) = psi(z) / z^3 with phi(0) = 1/6.
double toda_phi(double z);

using SignalFn = std::function<double(double)>;

struct GaussianPulse {
  double magnitude = 3.0;
  double sigma = 0.5;
  double center = 1.5;
  double window = 3.0;
};

SignalFn gaussian_pulse(const GaussianPulse& g);
SignalFn sinusoid(double amplitude, double omega, double phase = 0.0);
SignalFn constant_signal(double value);

/// Input vector of size `ports` carrying `signal` on port `port`, zero elsewhere.
InputFn on_port(SignalFn signal, Index ports, Index port = 0);

/// const_0p1, sin_0p1, gaussian (default pulse) and sinusoid_ladder
/// (amplitude 1, angular frequency 2).
std::map<std::string, SignalFn> standard_inputs();

}  // namespace phred
