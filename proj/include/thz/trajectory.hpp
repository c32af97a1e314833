// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace thz {

/// Time series of (value, d/dt value) at one spatial point on the uniform slab
/// grid t_i = t0 + i*k, i = 0..n_steps. The two channels pin a cubic Hermite
/// reconstruction on every slab, C1 across slab boundaries.
struct TrajectorySeries {
  double x = 0.0;
  double t0 = 0.0;
  double k = 0.0;
  Eigen::VectorXd value;
  Eigen::VectorXd deriv;

  int n_steps() const { return static_cast<int>(value.size()) - 1; }
  double t_end() const { return t0 + n_steps() * k; }
  void validate() const;
};

/// Period-interface coordinates {Lambda * i : i = 1..m}.
std::vector<double> collocation_points(double period, int m);

/// Cubic Hermite evaluation of the series at time t (value, derivative).
std::pair<double, double> hermite_reconstruct(const TrajectorySeries& s, double t);

struct ErrorNorms {
  double linf_l2 = 0.0;
  double l2_l2 = 0.0;
};

/// Discrete trajectory norms: Linf over grid points of |a-b|, and the L2-in-time
/// norm of the Hermite-reconstructed difference (4-point Gauss per slab).
ErrorNorms error_norms(const TrajectorySeries& a, const TrajectorySeries& b);

/// Dataset container: named series plus provenance fields echoed from the run.
struct Dataset {
  std::vector<TrajectorySeries> series;
  std::map<std::string, std::string> meta;
};

/// File format: magic "THZDATA\0", 8-byte LE payload length for the JSON
/// manifest, the manifest, then the raw [point][timestep][channel] float64
/// payload. Round trips are bit exact.
void dataset_write(const std::string& path, const Dataset& ds);
Dataset dataset_read(const std::string& path);

}  // namespace thz
