// SPDX-License-Identifier: Apache-2.0
#include "thz/pml.hpp"

namespace thz {

PmlCoefficients pml_profiles(double x, const PmlProfile& p) {
  PmlCoefficients c;
  if (!p.enabled() || x <= p.x_start || x > p.x_start + p.width + 1e-15 * p.width) return c;
  double s = (x - p.x_start) / p.width;
  double sig = p.sigma_max;
  for (int i = 0; i < p.grade_power; ++i) sig *= s;
  c.sigma = sig;
  c.alpha = sig;
  c.sigma_tilde = sig;
  c.alpha_tilde = sig;
  return c;
}

}  // namespace thz
