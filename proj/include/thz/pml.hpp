// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

namespace thz {

/// Monomial-graded absorption profile for the right-side PML. All four
/// coefficient functions coincide (alpha = sigma~ = alpha~ = sigma) and the
/// stretching kappa is 1.
struct PmlProfile {
  double x_start = 0.0;   // physical/PML interface
  double width = 0.0;
  double sigma_max = 0.0;
  int grade_power = 2;

  /// sigma_max giving a normal-incidence round-trip attenuation of `target`
  /// through the layer: exp(-2 sigma_max width / (m+1)) = target.
  static double sigma_for_round_trip(double width, int grade_power, double target = 1e-6) {
    return -std::log(target) * (grade_power + 1) / (2.0 * width);
  }

  bool enabled() const { return width > 0.0; }
};

struct PmlCoefficients {
  double sigma = 0.0;
  double alpha = 0.0;
  double sigma_tilde = 0.0;
  double alpha_tilde = 0.0;
  double kappa = 1.0;
};

PmlCoefficients pml_profiles(double x, const PmlProfile& profile);

}  // namespace thz
