// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "thz/gcc.hpp"

namespace thz {

/// Closed-form solution family for convergence studies: the electric field is a
/// sum of traveling sinusoids sin(2 pi omega (x - n t)) and the polarization is
/// the exact steady-state response of the Lorentz oscillator to each component.
/// The remaining auxiliaries follow from their defining relations and the
/// source term closes the field equation. chi2 is spatially constant here so
/// that every manufactured field stays smooth.
class TravelingWaveSolution {
 public:
  struct Wave {
    double omega, speed;
  };

  TravelingWaveSolution(const Material& mat, double chi, std::vector<Wave> waves);

  double E(double x, double t) const;
  double Et(double x, double t) const;
  double P(double x, double t) const;
  double Pt(double x, double t) const;
  double U(double x, double t) const;
  double Ut(double x, double t) const;
  double A(double x, double t) const;
  double At(double x, double t) const;
  double f(double x, double t) const;
  double ft(double x, double t) const;

  InitialData initial_data(const CubicFeSpace& space, bool analytic_derivatives) const;
  BoundarySignal boundary(double x_left, double x_right) const;
  Forcing forcing() const;

 private:
  struct Comp {
    double kap, om, Ap, Bp;
  };
  double Ett(double x, double t) const;
  double Ettt(double x, double t) const;
  double Exx(double x, double t) const;
  double Exxt(double x, double t) const;
  double Ptt(double x, double t) const;

  Material mat_;
  double chi_;
  std::vector<Comp> comps_;
};

struct ConvergenceRow {
  int level;
  int n_elem;
  int n_slabs;
  double k;
  // field order: E, A, P, U
  double linf_l2[4];
  double l2_l2[4];
  double eoc_linf[4];
  double eoc_l2[4];
};

struct ConvergenceSetup {
  Material material;
  double chi = 0.1;
  double x_left = 0.0;
  double x_right = 1.0;
  double t_final = 1.0;
  int base_elems = 16;
  int base_slabs = 32;
  int levels = 5;
  std::vector<TravelingWaveSolution::Wave> waves{{2.0, 1.0}, {3.0, 1.5}};
  bool analytic_initial_rates = false;  // bypass initial_time_derivatives
  bool with_pml = false;      // mode (a): weighted source + PML; mode (b): Dirichlet both ends
  double pml_width = 0.25;
  int pml_elems_base = 1;
  NewtonConfig newton;
};

/// Simultaneous tau,h halving study; errors are measured over the physical
/// region in the L-inf(L2) and L2(L2) norms for E, A, P, U.
std::vector<ConvergenceRow> run_convergence(const ConvergenceSetup& setup);

}  // namespace thz
