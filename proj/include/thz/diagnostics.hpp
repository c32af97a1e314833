// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <string>

#include "thz/fem.hpp"
#include "thz/trajectory.hpp"

namespace thz {

/// Damped-oscillator dispersion law evaluated at frequency nu.
std::complex<double> lorentz_permittivity(double nu, const Material& mat);

struct Spectrum {
  Eigen::VectorXd freq;                       // j / (N k), j = 0..N-1
  std::vector<std::complex<double>> amp;      // DFT of the value channel
  Eigen::VectorXd power;                      // |amp|^2
};

Spectrum spectrum_of(const TrajectorySeries& trace);
void spectrum_write_csv(const std::string& path, const Spectrum& s);

struct IntensityResult {
  Eigen::VectorXd intensity;  // time samples of (1/2)|sqrt(eps_r) * E|^2
  double fluence = 0.0;       // time average of the intensity
};

/// Frequency-domain evaluation of the dispersive intensity: multiply the
/// spectrum by sqrt(eps_r) (principal branch, sign-continuous across the
/// resonance), invert, halve the squared magnitude. Normalized units.
IntensityResult intensity_fluence(const TrajectorySeries& trace, const Material& mat);

/// Fraction of spectral energy inside [f_lo, f_hi] (Parseval-consistent sums).
double conversion_efficiency(const TrajectorySeries& trace, double f_lo, double f_hi);

}  // namespace thz
