// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "thz/neural.hpp"
#include "thz/training.hpp"

namespace thz {

struct PulseBounds {
  double tau_max = 10.0;
  double p_max = 10.0;
  double a_max = 10.0;
  double phi_max = 2.0 * M_PI;
  double zeta_max = 10.0;
  double f_max = 100.0;
};

/// Control parameters of the supergaussian pulse train: width tau, order p and
/// per-component amplitude, phase, chirp, frequency. Flat layout
/// [tau, p, a_1..a_n, phi_1..phi_n, zeta_1..zeta_n, f_1..f_n].
struct PulseParams {
  double tau = 1.0;
  double p = 1.0;
  std::vector<double> a, phi, zeta, f;
  PulseBounds bounds;

  int n() const { return static_cast<int>(a.size()); }
  int dim() const { return 2 + 4 * n(); }
  Eigen::VectorXd flat() const;
  static PulseParams from_flat(const Eigen::VectorXd& x, const PulseBounds& b);
  void validate() const;
};

/// Componentwise clamp onto [0, bound]; idempotent.
PulseParams project_bounds(const PulseParams& xi);

/// Differentiable sampler: evaluates the pulse and its analytic time derivative
/// on the grid; gradients flow to every entry of the flat parameter leaf.
std::pair<ad::DT, ad::DT> sample_pulse(ad::Tape& tape, ad::DT xi_flat, int n_components,
                                       const Eigen::VectorXd& times);

/// Convenience: sample with plain numbers into a trajectory.
TrajectorySeries sample_pulse(const PulseParams& xi, double t0, double k, int n_steps);

/// Smooth compactly supported band weight centered at f_center with half-width
/// r: exp(r^2 / ((nu - f_center)^2 - r^2)) inside, 0 outside.
double bump_psi(double nu, double f_center, double r);

struct CostConfig {
  double f_center = 1.0;   // target frequency
  double band_halfwidth = 0.1;
  double penalty_alpha = 6e-14;
  bool maximize = true;
};

/// Spectral band energy of the value channel: psi-weighted trapezoid sum of the
/// squared DFT modulus over the discrete frequencies j/(N k), folded so both
/// Hermitian partners count.
ad::DT cost_G(ad::Tape& tape, ad::DT value_channel, double k, const CostConfig& cfg);

struct ObjectiveParts {
  ad::DT J;
  double cost = 0.0;
  double penalty = 0.0;
};

/// J = cost - alpha/2 ||g||^2 when maximizing, cost + alpha/2 ||g||^2 when
/// minimizing; the operator chain applies the surrogate m times to the sampled
/// pulse.
ObjectiveParts objective(ad::Tape& tape, ad::DT xi_flat, int n_components,
                         const SolutionOperator& op, const Bound& bound, int chain_length,
                         const CostConfig& cfg, const Eigen::VectorXd& times);

struct OcpConfig {
  CostConfig cost;
  int chain_length = 1;
  int max_iter = 200;
  double step_tol = 1e-9;
  enum class Opt { adamw, lbfgs } optimizer = Opt::adamw;
  AdamWConfig adamw{.lr = 2e-2};
  LbfgsConfig lbfgs;
};

struct OcpIterate {
  int iter;
  double cost;
  double penalty;
  double J;
  double step_norm;
  Eigen::VectorXd xi;
};

struct OcpResult {
  PulseParams params;
  std::vector<OcpIterate> trace;
  std::string stop_reason;
};

/// Algorithm: sample -> evaluate surrogate chain -> gradient -> update ->
/// project, until the update norm drops below step_tol or max_iter.
OcpResult optimize_pulse(const PulseParams& init, const SolutionOperator& op,
                         const OcpConfig& cfg);

}  // namespace thz
