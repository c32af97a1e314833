// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <optional>

#include "thz/fem.hpp"
#include "thz/pml.hpp"
#include "thz/trajectory.hpp"

namespace thz {

/// Reference Hermite basis xi_0..xi_3 on [0,1]:
///   xi0 = 1 - 3t^2 + 2t^3,  xi1 = t - 2t^2 + t^3,
///   xi2 = 3t^2 - 2t^3,      xi3 = -t^2 + t^3.
/// Returns (value, reference derivative) of xi_j at that.
std::pair<double, double> hermite_eval(int j, double that);

/// Treatment of |w| in the quadratic term |w|w for the 1D scalar field:
/// `contraction` reads |w| as the component sum (the field itself), so
/// |w|w = w^2; `magnitude` uses the literal absolute value.
enum class AbsMode { contraction, magnitude };

struct NewtonConfig {
  double abs_tol = 1e-11;
  double rel_tol = 1e-12;
  int max_iter = 12;
  double damping = 1.0;
  void validate() const;
};

struct NewtonFailure : std::runtime_error {
  std::vector<double> residual_history;
  explicit NewtonFailure(const std::string& what, std::vector<double> hist)
      : std::runtime_error(what), residual_history(std::move(hist)) {}
};

/// Hermite coefficient blocks of one time slab for every field. Convention on
/// the reference interval: w[0] = value at t_{n-1}, w[1] = k * (d/dt at t_{n-1}),
/// w[2] = value at t_n, w[3] = k * (d/dt at t_n).
struct SlabState {
  std::array<Vec, 4> u, p, a, e;
  std::array<Vec, 4> r, q;  // PML auxiliaries, empty without a PML
  double k = 0.0;
  int index = 0;
  double t_start = 0.0;

  bool has_pml() const { return r[0].size() > 0; }
};

/// Boundary trace supplier: (g, dt g) at a boundary point for any time.
using TraceFn = std::function<std::pair<double, double>(double t)>;

struct BoundarySignal {
  TraceFn left;
  TraceFn right;  // nullptr = homogeneous
};

/// Volume forcing in the electric-field equation; value and time derivative.
struct Forcing {
  std::function<double(double x, double t)> value;
  std::function<double(double x, double t)> dt;
  bool is_zero() const { return !value; }
};

struct InitialData {
  Vec u0, p0, a0, e0;
  /// Optional explicit time derivatives (du, dp, da, de); when absent they are
  /// computed by initial_time_derivatives.
  std::optional<std::array<Vec, 4>> derivatives;
};

/// Time derivatives of all four fields at t0 from the collocation conditions.
/// The de formula divides by (eps_omega + 2 chi |e0|) nodewise; a vanishing
/// denominator raises an error asking for an explicit de override. The da
/// formula needs the discrete Laplacian of e0: interior rows come from the
/// mass-projected stiffness action, boundary rows from a one-sided
/// finite-difference of the nodal values (the stiffness boundary rows carry
/// the flux term and cannot be used).
std::array<Vec, 4> initial_time_derivatives(const CubicFeSpace& space, const Material& mat,
                                            const Vec& u0, const Vec& p0, const Vec& a0,
                                            const Vec& e0, const Vec& f0, const CoeffFn& chi,
                                            const BandMatrix& mass,
                                            const BandMatrix& stiffness,
                                            AbsMode mode = AbsMode::contraction);

/// Generated rational coefficient tables of the condensed slab system.
/// row indices: 0=C2 1=V2 2=C3 3=V3 4=Cr 5=Vr 6=Cq 7=Vq
/// channel indices: 0=M 1=K 2=D 3=Ms 4=Ds
/// block indices: e2 e3 a2 a3 r2 r3 q2 q3 e0 e1 a0 a1 p0 p1 u0 u1 r0 r1 q0 q1 f0 f1 f2 f3
struct CondensedTables {
  double row[8][5][24];
  double rec[4][8];  // u2,p2,u3,p3 from (e0,e1,e2,e3,p0,p1,u0,u1)
};

enum Block : int {
  B_e2 = 0, B_e3, B_a2, B_a3, B_r2, B_r3, B_q2, B_q3,
  B_e0, B_e1, B_a0, B_a1, B_p0, B_p1, B_u0, B_u1,
  B_r0, B_r1, B_q0, B_q1, B_f0, B_f1, B_f2, B_f3,
  B_count
};

CondensedTables condensed_tables(double k, double gamma0, double nu_t2, double eps_delta,
                                 double eps_omega);

/// History + forcing data entering one slab solve, all over the full dof range.
struct SlabInputs {
  std::array<Vec, B_count> blocks;  // unknown slots hold the current iterate
  double g_left[2] = {0, 0};        // e2, e3 Dirichlet values at the left dof
  double g_right[2] = {0, 0};
};

/// Assembler/solver for the condensed slab system on a fixed space, material,
/// chi2 layout, slab width and optional PML.
class SlabSystem {
 public:
  SlabSystem(const CubicFeSpace& space, const Material& mat, CoeffFn chi, double k,
             AbsMode mode = AbsMode::contraction, const PmlProfile* pml = nullptr);

  const CubicFeSpace& space() const { return *space_; }
  double k() const { return k_; }
  bool has_pml() const { return pml_.enabled(); }
  AbsMode abs_mode() const { return mode_; }
  int system_size() const { return n_sys_; }
  int pml_dof0() const { return pml_dof0_; }
  bool is_linear() const { return linear_; }

  /// Position of (dof, slot) in the stacked unknown vector. Slots per dof:
  /// 0=a2 1=a3 2=e2 3=e3 (+ 4=r2 5=r3 6=q2 7=q3 on PML dofs). Equation rows use
  /// the same layout with 0=C2 1=V2 2=C3 3=V3 (+ 4=Cr 5=Vr 6=Cq 7=Vq).
  int slot(int dof, int s) const { return offset_[dof] + s; }
  int slots_at(int dof) const { return (dof >= pml_dof0_) ? 8 : 4; }

  Vec residual(const SlabInputs& in) const;
  BandMatrix jacobian(const SlabInputs& in) const;
  /// Applies Dirichlet pinning of e2/e3 boundary slots to a Jacobian/rhs pair.
  void pin_dirichlet(BandMatrix& J, Vec& rhs) const;

  /// Newton loop on the condensed unknowns; writes the solved blocks back into
  /// `in` and returns the iteration count.
  int newton_solve(SlabInputs& in, const NewtonConfig& cfg) const;

  /// Closed-form recovery of u2, p2, u3, p3 from the solved blocks.
  void recover_auxiliary(const SlabInputs& in, Vec& u2, Vec& p2, Vec& u3, Vec& p3) const;

  /// Weak residual L2 norms of the four strong-form equations at t_n
  /// (p-, u-, a-, e- equation order) for a solved slab.
  std::array<double, 4> collocation_residuals(const SlabState& slab, const Vec& f2) const;

  const BandMatrix& mass() const { return M_; }
  const BandMatrix& mass_factored() const { return Mf_; }
  const BandMatrix& stiffness() const { return K_; }

 private:
  void scatter_linear(BandMatrix& J) const;
  void add_chi_residual(const SlabInputs& in, Vec& res) const;
  void add_chi_jacobian(const SlabInputs& in, BandMatrix& J) const;

  const CubicFeSpace* space_;
  Material mat_;
  CoeffFn chi_;
  double k_;
  AbsMode mode_;
  PmlProfile pml_;
  CondensedTables tab_;
  BandMatrix M_, K_, Dp_, Ms_, Ds_, Mp_;  // mass, stiffness, pml deriv, sigma mass, sigma deriv, pml mass
  BandMatrix Mf_;                         // factored copy of the mass matrix
  std::vector<int> offset_;
  int pml_dof0_ = 0;
  int n_sys_ = 0;
  int bw_ = 0;
  bool linear_ = false;
  mutable std::optional<BandMatrix> cached_linear_factor_;  // pinned, factored chi-free jacobian
};

struct MarchOptions {
  int n_slabs = 1;
  double k = 0.0;
  double t0 = 0.0;
  NewtonConfig newton;
  AbsMode abs_mode = AbsMode::contraction;
  std::vector<double> taps;
  const PmlProfile* pml = nullptr;
  /// Called after each solved slab (convergence studies, dataset capture).
  std::function<void(const SlabState&)> observer;
};

struct MarchResult {
  SlabState final_slab;
  std::vector<TrajectorySeries> tap_series;
  long long newton_iterations = 0;
};

MarchResult march(const CubicFeSpace& space, const Material& mat, const CoeffFn& chi,
                  const InitialData& init, const BoundarySignal& bc, const Forcing& forcing,
                  const MarchOptions& opt);

}  // namespace thz
