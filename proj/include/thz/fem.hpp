// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <vector>

namespace thz {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Lorentz-medium coefficients in normalized units (c0 = 1, eps0 = 1).
struct Material {
  double gamma0 = 0.0;     // damping rate
  double nu_t = 1.0;       // resonance frequency
  double eps_omega = 1.0;  // high-frequency permittivity
  double eps_Omega = 1.0;  // low-frequency permittivity
  double chi2 = 0.0;       // quadratic susceptibility magnitude

  double eps_delta() const { return eps_Omega - eps_omega; }
  double nu_t2() const { return nu_t * nu_t; }
  void validate() const;
};

/// 1D computational domain: [x_left, x_right] physical, PML appended on the right.
/// The poled crystal occupies [x_left, x_left + n_periods * poling_period), with
/// the chi2 sign flipping every period and vanishing outside the crystal.
struct DomainSpec {
  double x_left = 0.0;
  double x_right = 1.0;
  double poling_period = 0.0;  // Lambda; 0 disables the crystal
  int n_periods = 0;
  double pml_width = 0.0;

  int chi2_sign(double x) const;
  void validate() const;
};

enum class ElemKind { physical, pml };

struct Mesh1D {
  Vec vertices;                  // ascending, size n_elem + 1
  std::vector<ElemKind> kinds;   // per element

  int n_elem() const { return static_cast<int>(kinds.size()); }
  double width(int e) const { return vertices[e + 1] - vertices[e]; }
};

/// Continuous piecewise-cubic Lagrange space on a Mesh1D. Element e owns global
/// dofs {3e, 3e+1, 3e+2, 3e+3}; endpoint dofs are shared between neighbours.
struct CubicFeSpace {
  Mesh1D mesh;
  Vec dof_x;                       // dof coordinates, size 3*n_elem + 1
  std::vector<int> dirichlet_dofs; // {0, n_dof-1}

  int n_dof() const { return static_cast<int>(dof_x.size()); }
  int n_elem() const { return mesh.n_elem(); }
  int first_pml_elem() const;      // n_elem() when no PML
  int dof0(int e) const { return 3 * e; }
  /// Nodal interpolation of a scalar function.
  Vec interpolate(const std::function<double(double)>& f) const;
  /// Nearest dof index to coordinate x.
  int nearest_dof(double x) const;
};

std::pair<Mesh1D, CubicFeSpace> build_domain(const DomainSpec& spec, int n_elem_physical,
                                             int n_elem_pml);

/// Reference cubic Lagrange basis on [0,1] with equispaced nodes {0,1/3,2/3,1}.
double lagrange3_value(int i, double xhat);
double lagrange3_deriv(int i, double xhat);

/// 4-point Gauss-Legendre rule on [0,1]; exact through degree 7.
struct GaussRule4 {
  static const double pts[4];
  static const double wts[4];
};

/// General band matrix with LAPACK-style storage (kl extra rows for pivoting fill).
class BandMatrix {
 public:
  BandMatrix() = default;
  BandMatrix(int n, int kl, int ku);

  int rows() const { return n_; }
  int lower() const { return kl_; }
  int upper() const { return ku_; }

  double& at(int i, int j);
  double get(int i, int j) const;
  void add(int i, int j, double v) { at(i, j) += v; }
  void set_zero() { ab_.setZero(); factored_ = false; }

  /// In-place banded LU with partial pivoting. Throws on a pivot that is zero
  /// to working precision, naming its index.
  void factor();
  bool factored() const { return factored_; }
  Vec solve(const Vec& b) const;  // requires factor() first

  Vec multiply(const Vec& x) const;  // y = A x using unfactored entries
  double inf_norm() const;
  Mat dense() const;

  /// Symmetric Dirichlet elimination: x[dof] = value. Moves the column into rhs,
  /// zeroes row and column, puts 1 on the diagonal.
  void eliminate_dirichlet(int dof, double value, Vec& rhs);

  BandMatrix clone_unfactored() const;

 private:
  int n_ = 0, kl_ = 0, ku_ = 0;
  Mat ab_;               // (2*kl + ku + 1) x n, ab_(kl + ku + i - j, j) = A(i,j)
  std::vector<int> piv_;
  bool factored_ = false;
};

Vec band_solve(BandMatrix A, const Vec& b);

using CoeffFn = std::function<double(double)>;

/// mass_ij = int c(x) phi_i phi_j dx
BandMatrix assemble_mass(const CubicFeSpace& space, const CoeffFn& c);
/// stiffness_ij = int c(x) phi_i' phi_j' dx
BandMatrix assemble_stiffness(const CubicFeSpace& space, const CoeffFn& c);
/// deriv_ij = int c(x) phi_j' phi_i dx   (first-order advection block)
BandMatrix assemble_deriv(const CubicFeSpace& space, const CoeffFn& c);

struct AssembledOperators {
  BandMatrix mass;
  BandMatrix stiffness;
};
AssembledOperators assemble_matrices(const CubicFeSpace& space, const CoeffFn& c);

}  // namespace thz
