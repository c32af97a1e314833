// SPDX-License-Identifier: Apache-2.0
#include "thz/gcc.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace thz {

std::pair<double, double> hermite_eval(int j, double t) {
  switch (j) {
    case 0: return {1.0 - 3.0 * t * t + 2.0 * t * t * t, -6.0 * t + 6.0 * t * t};
    case 1: return {t - 2.0 * t * t + t * t * t, 1.0 - 4.0 * t + 3.0 * t * t};
    case 2: return {3.0 * t * t - 2.0 * t * t * t, 6.0 * t - 6.0 * t * t};
    case 3: return {-t * t + t * t * t, -2.0 * t + 3.0 * t * t};
    default: throw std::out_of_range("hermite_eval: basis index " + std::to_string(j));
  }
}

void NewtonConfig::validate() const {
  if (abs_tol <= 0.0 || rel_tol <= 0.0) throw std::invalid_argument("NewtonConfig: tolerances must be > 0");
  if (max_iter < 1) throw std::invalid_argument("NewtonConfig: max_iter must be >= 1");
  if (damping <= 0.0 || damping > 1.0) throw std::invalid_argument("NewtonConfig: damping in (0,1]");
}

namespace {
using std::pow;
#include "condensed_tables.inc"
}  // namespace

CondensedTables condensed_tables(double k, double gamma0, double nu_t2, double eps_delta,
                                 double eps_omega) {
  return make_condensed_tables(k, gamma0, nu_t2, eps_delta, eps_omega);
}

namespace {

// one-sided 4th-order second derivative from six equispaced nodal values
double onesided_d2(const Vec& v, int i0, int step, double d) {
  static const double c[6] = {15.0 / 4.0, -77.0 / 6.0, 107.0 / 6.0, -13.0, 61.0 / 12.0,
                              -5.0 / 6.0};
  double acc = 0.0;
  for (int j = 0; j < 6; ++j) acc += c[j] * v[i0 + j * step];
  return acc / (d * d);
}

}  // namespace

std::array<Vec, 4> initial_time_derivatives(const CubicFeSpace& space, const Material& mat,
                                            const Vec& u0, const Vec& p0, const Vec& a0,
                                            const Vec& e0, const Vec& f0, const CoeffFn& chi,
                                            const BandMatrix& mass,
                                            const BandMatrix& stiffness, AbsMode mode) {
  const int n = space.n_dof();
  if (u0.size() != n || p0.size() != n || a0.size() != n || e0.size() != n)
    throw std::invalid_argument("initial_time_derivatives: field size mismatch");
  const double nt2 = mat.nu_t2(), eD = mat.eps_delta(), g0 = mat.gamma0;

  Vec du = nt2 * eD * e0 - nt2 * p0;
  Vec dp = u0 - g0 * p0;

  // A_h e0 with the near-boundary rows pinned from one-sided nodal
  // differences; the stiffness rows there carry the boundary flux
  Vec rhs = stiffness.multiply(e0);
  BandMatrix Mp = mass.clone_unfactored();
  auto uniform_window = [&](int i0, int step) {
    const double d = space.dof_x[i0 + step] - space.dof_x[i0];
    for (int j = 1; j < 5; ++j)
      if (std::abs(space.dof_x[i0 + (j + 1) * step] - space.dof_x[i0 + j * step] - d) >
          1e-12 * std::abs(d))
        return false;
    return true;
  };
  const int n_pin = (n >= 18) ? 6 : 1;
  for (int side = 0; side < 2; ++side) {
    const int b = side == 0 ? 0 : n - 1;
    const int dir = side == 0 ? 1 : -1;
    for (int j = 0; j < n_pin; ++j) {
      const int i0 = b + dir * j;
      double lap = 0.0;
      if (n >= 6 && uniform_window(i0, dir))
        lap = onesided_d2(e0, i0, dir, dir * (space.dof_x[i0 + dir] - space.dof_x[i0]));
      else if (n >= 6 && uniform_window(i0, -dir))
        lap = onesided_d2(e0, i0, -dir, -dir * (space.dof_x[i0] - space.dof_x[i0 - dir]));
      Mp.eliminate_dirichlet(i0, -lap, rhs);
    }
  }
  Mp.factor();
  Vec ah = Mp.solve(rhs);
  Vec da = (f0.size() == n ? f0 : Vec::Zero(n)) - ah - eD * nt2 * e0 + nt2 * p0;
  Vec de(n);
  for (int i = 0; i < n; ++i) {
    const double c = chi ? chi(space.dof_x[i]) : 0.0;
    const double e = (mode == AbsMode::contraction) ? e0[i] : std::abs(e0[i]);
    const double den = mat.eps_omega + 2.0 * c * e;
    if (std::abs(den) < 1e-14)
      throw std::runtime_error(
          "initial_time_derivatives: singular de denominator; supply an explicit de override");
    de[i] = (a0[i] + g0 * p0[i]) / den;
  }
  return {du, dp, da, de};
}

SlabSystem::SlabSystem(const CubicFeSpace& space, const Material& mat, CoeffFn chi, double k,
                       AbsMode mode, const PmlProfile* pml)
    : space_(&space), mat_(mat), chi_(std::move(chi)), k_(k), mode_(mode) {
  mat_.validate();
  if (!(k > 0.0)) throw std::invalid_argument("SlabSystem: slab width must be > 0");
  const int J = space.n_dof();
  if (pml && pml->enabled()) {
    pml_ = *pml;
    const int e0 = space.first_pml_elem();
    if (e0 == space.n_elem())
      throw std::invalid_argument("SlabSystem: PML profile given but the mesh has no PML elements");
    pml_dof0_ = 3 * e0;
  } else {
    pml_dof0_ = J;
  }

  offset_.resize(J + 1);
  offset_[0] = 0;
  for (int j = 0; j < J; ++j) offset_[j + 1] = offset_[j] + slots_at(j);
  n_sys_ = offset_[J];

  bw_ = 0;
  for (int i = 0; i < J; ++i)
    for (int j = std::max(0, i - 3); j <= std::min(J - 1, i + 3); ++j)
      bw_ = std::max(bw_, offset_[i] + slots_at(i) - 1 - offset_[j]);

  M_ = assemble_mass(space, [](double) { return 1.0; });
  K_ = assemble_stiffness(space, [](double) { return 1.0; });
  Mf_ = M_.clone_unfactored();
  Mf_.factor();
  if (pml_.enabled()) {
    const double xs = pml_.x_start;
    auto ind = [xs](double x) { return x > xs ? 1.0 : 0.0; };
    auto sig = [this](double x) { return pml_profiles(x, pml_).sigma; };
    Dp_ = assemble_deriv(space, ind);
    Mp_ = assemble_mass(space, ind);
    Ms_ = assemble_mass(space, sig);
    Ds_ = assemble_deriv(space, sig);
  }

  tab_ = condensed_tables(k_, mat_.gamma0, mat_.nu_t2(), mat_.eps_delta(), mat_.eps_omega);

  linear_ = true;
  if (chi_) {
    for (int e = 0; e < space.n_elem(); ++e) {
      const double mid = 0.5 * (space.mesh.vertices[e] + space.mesh.vertices[e + 1]);
      if (chi_(mid) != 0.0) {
        linear_ = false;
        break;
      }
    }
  }
}

namespace {
constexpr int kColSlot[8] = {2, 3, 0, 1, 4, 5, 6, 7};  // e2 e3 a2 a3 r2 r3 q2 q3 -> slot
}

Vec SlabSystem::residual(const SlabInputs& in) const {
  const int J = space_->n_dof();
  Vec res = Vec::Zero(n_sys_);
  const int nrows = pml_.enabled() ? 8 : 4;
  for (int row = 0; row < nrows; ++row) {
    Vec tmp = Vec::Zero(J);
    for (int ch = 0; ch < 5; ++ch) {
      const BandMatrix* A = nullptr;
      if (row < 4) {
        switch (ch) {
          case 0: A = &M_; break;
          case 1: A = &K_; break;
          case 2: A = pml_.enabled() ? &Dp_ : nullptr; break;
          case 3: A = pml_.enabled() ? &Ms_ : nullptr; break;
          case 4: A = pml_.enabled() ? &Ds_ : nullptr; break;
        }
      } else {
        switch (ch) {
          case 0: A = &Mp_; break;
          case 3: A = &Ms_; break;
          case 4: A = &Ds_; break;
          default: A = nullptr;
        }
      }
      if (!A || A->rows() == 0) continue;
      Vec comb = Vec::Zero(J);
      bool any = false;
      for (int b = 0; b < B_count; ++b) {
        const double c = tab_.row[row][ch][b];
        if (c == 0.0 || in.blocks[b].size() == 0) continue;
        comb += c * in.blocks[b];
        any = true;
      }
      if (any) tmp += A->multiply(comb);
    }
    if (row < 4) {
      for (int i = 0; i < J; ++i) res[offset_[i] + row] += tmp[i];
    } else {
      for (int i = pml_dof0_; i < J; ++i) res[offset_[i] + row] += tmp[i];
    }
  }
  add_chi_residual(in, res);
  // pinned constraint rows are exactly satisfied
  res[slot(0, 2)] = 0.0;
  res[slot(0, 3)] = 0.0;
  res[slot(J - 1, 2)] = 0.0;
  res[slot(J - 1, 3)] = 0.0;
  return res;
}

void SlabSystem::scatter_linear(BandMatrix& Jm) const {
  const int J = space_->n_dof();
  const int nrows = pml_.enabled() ? 8 : 4;
  for (int row = 0; row < nrows; ++row) {
    const int i_lo = (row < 4) ? 0 : pml_dof0_;
    for (int ch = 0; ch < 5; ++ch) {
      const BandMatrix* A = nullptr;
      if (row < 4) {
        switch (ch) {
          case 0: A = &M_; break;
          case 1: A = &K_; break;
          case 2: A = pml_.enabled() ? &Dp_ : nullptr; break;
          case 3: A = pml_.enabled() ? &Ms_ : nullptr; break;
          case 4: A = pml_.enabled() ? &Ds_ : nullptr; break;
        }
      } else {
        switch (ch) {
          case 0: A = &Mp_; break;
          case 3: A = &Ms_; break;
          case 4: A = &Ds_; break;
          default: A = nullptr;
        }
      }
      if (!A || A->rows() == 0) continue;
      for (int b = 0; b < 8; ++b) {  // unknown blocks only
        const double c = tab_.row[row][ch][b];
        if (c == 0.0) continue;
        const int cs = kColSlot[b];
        for (int i = i_lo; i < J; ++i) {
          for (int j = std::max(0, i - 3); j <= std::min(J - 1, i + 3); ++j) {
            if (cs >= 4 && j < pml_dof0_) continue;  // r/q columns exist on PML dofs only
            const double v = A->get(i, j);
            if (v != 0.0) Jm.add(offset_[i] + row, offset_[j] + cs, c * v);
          }
        }
      }
    }
  }
}

void SlabSystem::add_chi_residual(const SlabInputs& in, Vec& res) const {
  if (!chi_) return;
  const auto& e0 = in.blocks[B_e0];
  const auto& e2 = in.blocks[B_e2];
  const auto& e3 = in.blocks[B_e3];
  for (int e = 0; e < space_->n_elem(); ++e) {
    const double a = space_->mesh.vertices[e], h = space_->mesh.width(e);
    const double ce = chi_(a + 0.5 * h);
    if (ce == 0.0) continue;
    const int d0 = space_->dof0(e);
    for (int q = 0; q < 4; ++q) {
      const double xh = GaussRule4::pts[q];
      double phi[4];
      double v0 = 0, v2 = 0, v3 = 0;
      for (int l = 0; l < 4; ++l) {
        phi[l] = lagrange3_value(l, xh);
        v0 += e0[d0 + l] * phi[l];
        v2 += e2[d0 + l] * phi[l];
        v3 += e3[d0 + l] * phi[l];
      }
      const double s2 = (mode_ == AbsMode::contraction) ? v2 : std::abs(v2);
      const double s0 = (mode_ == AbsMode::contraction) ? v0 : std::abs(v0);
      const double w = GaussRule4::wts[q] * h * ce;
      const double c2v = w * (2.0 / k_) * s2 * v3;        // d/dt(|e|e) at t_n
      const double v2v = w * (s2 * v2 - s0 * v0);         // telescoped time integral
      for (int i = 0; i < 4; ++i) {
        res[offset_[d0 + i] + 0] += c2v * phi[i];
        res[offset_[d0 + i] + 1] += v2v * phi[i];
      }
    }
  }
}

void SlabSystem::add_chi_jacobian(const SlabInputs& in, BandMatrix& Jm) const {
  if (!chi_) return;
  const auto& e2 = in.blocks[B_e2];
  const auto& e3 = in.blocks[B_e3];
  for (int e = 0; e < space_->n_elem(); ++e) {
    const double a = space_->mesh.vertices[e], h = space_->mesh.width(e);
    const double ce = chi_(a + 0.5 * h);
    if (ce == 0.0) continue;
    const int d0 = space_->dof0(e);
    for (int q = 0; q < 4; ++q) {
      const double xh = GaussRule4::pts[q];
      double phi[4];
      double v2 = 0, v3 = 0;
      for (int l = 0; l < 4; ++l) {
        phi[l] = lagrange3_value(l, xh);
        v2 += e2[d0 + l] * phi[l];
        v3 += e3[d0 + l] * phi[l];
      }
      const double s2 = (mode_ == AbsMode::contraction) ? v2 : std::abs(v2);
      const double ds2 = (mode_ == AbsMode::contraction) ? 1.0 : (v2 >= 0.0 ? 1.0 : -1.0);
      const double w = GaussRule4::wts[q] * h * ce;
      for (int i = 0; i < 4; ++i) {
        const int ri = offset_[d0 + i];
        for (int j = 0; j < 4; ++j) {
          const int cj = offset_[d0 + j];
          // C2 row: (2/k)(|e2|' de2 e3 + |e2| de3)
          Jm.add(ri + 0, cj + 2, w * (2.0 / k_) * ds2 * v3 * phi[j] * phi[i]);
          Jm.add(ri + 0, cj + 3, w * (2.0 / k_) * s2 * phi[j] * phi[i]);
          // V2 row: d(|e2|e2) = 2|e2| de2 (both product-rule terms)
          Jm.add(ri + 1, cj + 2, w * 2.0 * s2 * ds2 * phi[j] * phi[i]);
        }
      }
    }
  }
}

BandMatrix SlabSystem::jacobian(const SlabInputs& in) const {
  BandMatrix Jm(n_sys_, bw_, bw_);
  scatter_linear(Jm);
  add_chi_jacobian(in, Jm);
  return Jm;
}

void SlabSystem::pin_dirichlet(BandMatrix& Jm, Vec& rhs) const {
  const int J = space_->n_dof();
  for (int s : {2, 3}) {
    Jm.eliminate_dirichlet(slot(0, s), rhs[slot(0, s)], rhs);
    Jm.eliminate_dirichlet(slot(J - 1, s), rhs[slot(J - 1, s)], rhs);
  }
}

int SlabSystem::newton_solve(SlabInputs& in, const NewtonConfig& cfg) const {
  cfg.validate();
  const int J = space_->n_dof();
  auto enforce_bc = [&](SlabInputs& w) {
    w.blocks[B_e2][0] = w.g_left[0];
    w.blocks[B_e3][0] = w.g_left[1];
    w.blocks[B_e2][J - 1] = w.g_right[0];
    w.blocks[B_e3][J - 1] = w.g_right[1];
  };
  auto apply_step = [&](SlabInputs& w, const Vec& delta, double step) {
    for (int b = 0; b < 8; ++b) {
      if (w.blocks[b].size() == 0) continue;
      const int cs = kColSlot[b];
      for (int i = (cs >= 4 ? pml_dof0_ : 0); i < J; ++i)
        w.blocks[b][i] += step * delta[offset_[i] + cs];
    }
    enforce_bc(w);
  };
  enforce_bc(in);

  if (linear_ && !cached_linear_factor_) {
    BandMatrix Jl(n_sys_, bw_, bw_);
    scatter_linear(Jl);
    Vec dummy = Vec::Zero(n_sys_);
    pin_dirichlet(Jl, dummy);
    Jl.factor();
    cached_linear_factor_ = std::move(Jl);
  }

  Vec r = residual(in);
  double rn = r.norm();
  const double tol = cfg.abs_tol + cfg.rel_tol * rn;
  std::vector<double> hist{rn};
  int iters = 0;
  while (rn > tol) {
    if (iters >= cfg.max_iter)
      throw NewtonFailure("newton_solve_slab: no convergence after " +
                              std::to_string(cfg.max_iter) + " iterations (residual " +
                              std::to_string(rn) + ")",
                          hist);
    Vec rhs = -r;
    rhs[slot(0, 2)] = rhs[slot(0, 3)] = 0.0;
    rhs[slot(J - 1, 2)] = rhs[slot(J - 1, 3)] = 0.0;
    Vec delta;
    if (linear_) {
      delta = cached_linear_factor_->solve(rhs);
    } else {
      BandMatrix Jm = jacobian(in);
      pin_dirichlet(Jm, rhs);
      Jm.factor();
      delta = Jm.solve(rhs);
    }
    ++iters;
    double step = cfg.damping;
    SlabInputs trial = in;
    for (int attempt = 0;; ++attempt) {
      trial = in;
      apply_step(trial, delta, step);
      Vec rt = residual(trial);
      const double rtn = rt.norm();
      if (rtn <= rn || rtn <= tol || attempt >= 8) {
        in = trial;
        r = rt;
        rn = rtn;
        break;
      }
      step *= 0.5;  // damp only on residual increase
    }
    hist.push_back(rn);
  }
  return iters;
}

void SlabSystem::recover_auxiliary(const SlabInputs& in, Vec& u2, Vec& p2, Vec& u3,
                                   Vec& p3) const {
  const int J = space_->n_dof();
  const int idx[8] = {B_e0, B_e1, B_e2, B_e3, B_p0, B_p1, B_u0, B_u1};
  u2.resize(J);
  p2.resize(J);
  u3.resize(J);
  p3.resize(J);
  for (int i = 0; i < J; ++i) {
    double out[4] = {0, 0, 0, 0};
    for (int v = 0; v < 4; ++v)
      for (int b = 0; b < 8; ++b) out[v] += tab_.rec[v][b] * in.blocks[idx[b]][i];
    u2[i] = out[0];
    p2[i] = out[1];
    u3[i] = out[2];
    p3[i] = out[3];
  }
}

std::array<double, 4> SlabSystem::collocation_residuals(const SlabState& slab,
                                                        const Vec& f2) const {
  const int J = space_->n_dof();
  const double nt2 = mat_.nu_t2(), eD = mat_.eps_delta(), g0 = mat_.gamma0,
               eW = mat_.eps_omega;
  auto l2_nodal = [&](const Vec& v) { return std::sqrt(std::max(0.0, v.dot(M_.multiply(v)))); };
  auto l2_weak = [&](const Vec& R) { return std::sqrt(std::max(0.0, R.dot(Mf_.solve(R)))); };

  Vec rp = slab.p[3] / k_ + g0 * slab.p[2] - slab.u[2];
  Vec ru = slab.u[3] / k_ + nt2 * slab.p[2] - nt2 * eD * slab.e[2];

  Vec Ra = M_.multiply(Vec(eW * slab.e[3] / k_ - g0 * slab.p[2] - slab.a[2]));
  if (chi_) {
    SlabInputs tmp;
    for (auto& b : tmp.blocks) b = Vec();
    tmp.blocks[B_e0] = Vec::Zero(J);
    tmp.blocks[B_e2] = slab.e[2];
    tmp.blocks[B_e3] = slab.e[3];
    Vec chires = Vec::Zero(n_sys_);
    add_chi_residual(tmp, chires);
    for (int i = 0; i < J; ++i) Ra[i] += chires[offset_[i] + 0];
  }
  if (pml_.enabled() && slab.has_pml()) {
    Ra += eW * Ms_.multiply(slab.e[2]) - Ms_.multiply(slab.r[2]);
  }

  Vec Re = M_.multiply(Vec(slab.a[3] / k_ + nt2 * eD * slab.e[2] - nt2 * slab.p[2])) +
           K_.multiply(slab.e[2]);
  if (f2.size() == J) Re -= M_.multiply(f2);
  if (pml_.enabled() && slab.has_pml()) Re += Dp_.multiply(slab.q[2]);

  // boundary rows carry Dirichlet pins, not equations
  auto zero_bc_rows = [&](Vec& v) { v[0] = 0.0; v[J - 1] = 0.0; };
  zero_bc_rows(Ra);
  zero_bc_rows(Re);
  return {l2_nodal(rp), l2_nodal(ru), l2_weak(Ra), l2_weak(Re)};
}

MarchResult march(const CubicFeSpace& space, const Material& mat, const CoeffFn& chi,
                  const InitialData& init, const BoundarySignal& bc, const Forcing& forcing,
                  const MarchOptions& opt) {
  if (opt.n_slabs < 1) throw std::invalid_argument("march: need at least one slab");
  SlabSystem sys(space, mat, chi, opt.k, opt.abs_mode, opt.pml);
  const int J = space.n_dof();
  const double k = opt.k;

  std::array<Vec, 4> dt;
  if (init.derivatives) {
    dt = *init.derivatives;
  } else {
    Vec f0 = forcing.is_zero() ? Vec::Zero(J)
                               : space.interpolate([&](double x) { return forcing.value(x, opt.t0); });
    dt = initial_time_derivatives(space, mat, init.u0, init.p0, init.a0, init.e0, f0, chi,
                                  sys.mass(), sys.stiffness(), opt.abs_mode);
  }

  SlabInputs in;
  for (auto& b : in.blocks) b = Vec();
  in.blocks[B_u0] = init.u0;
  in.blocks[B_u1] = k * dt[0];
  in.blocks[B_p0] = init.p0;
  in.blocks[B_p1] = k * dt[1];
  in.blocks[B_a0] = init.a0;
  in.blocks[B_a1] = k * dt[2];
  in.blocks[B_e0] = init.e0;
  in.blocks[B_e1] = k * dt[3];
  for (int b : {B_e2, B_e3, B_a2, B_a3}) in.blocks[b] = Vec::Zero(J);
  if (sys.has_pml())
    for (int b : {B_r0, B_r1, B_q0, B_q1, B_r2, B_r3, B_q2, B_q3}) in.blocks[b] = Vec::Zero(J);

  // taps snap to the nearest dof
  std::vector<int> tap_dofs;
  MarchResult out;
  for (double x : opt.taps) {
    const int d = space.nearest_dof(x);
    if (std::abs(space.dof_x[d] - x) > 1e-9 * std::max(1.0, std::abs(x)))
      std::fprintf(stderr, "march: tap %.17g snapped to dof at %.17g\n", x, space.dof_x[d]);
    tap_dofs.push_back(d);
    TrajectorySeries s;
    s.x = space.dof_x[d];
    s.t0 = opt.t0;
    s.k = k;
    s.value.resize(opt.n_slabs + 1);
    s.deriv.resize(opt.n_slabs + 1);
    s.value[0] = init.e0[d];
    s.deriv[0] = dt[3][d];
    out.tap_series.push_back(std::move(s));
  }

  Vec f_lo(J), f_hi(J);
  Vec df_lo(J), df_hi(J);
  const bool has_f = !forcing.is_zero();
  if (has_f) {
    f_lo = space.interpolate([&](double x) { return forcing.value(x, opt.t0); });
    df_lo = space.interpolate([&](double x) { return forcing.dt(x, opt.t0); });
  }

  for (int n = 1; n <= opt.n_slabs; ++n) {
    const double t_lo = opt.t0 + (n - 1) * k, t_hi = opt.t0 + n * k;
    if (has_f) {
      f_hi = space.interpolate([&](double x) { return forcing.value(x, t_hi); });
      df_hi = space.interpolate([&](double x) { return forcing.dt(x, t_hi); });
      in.blocks[B_f0] = f_lo;
      in.blocks[B_f1] = k * df_lo;
      in.blocks[B_f2] = f_hi;
      in.blocks[B_f3] = k * df_hi;
    }
    const auto gl = bc.left ? bc.left(t_hi) : std::make_pair(0.0, 0.0);
    const auto gr = bc.right ? bc.right(t_hi) : std::make_pair(0.0, 0.0);
    in.g_left[0] = gl.first;
    in.g_left[1] = k * gl.second;
    in.g_right[0] = gr.first;
    in.g_right[1] = k * gr.second;

    // C1 Taylor predictor
    in.blocks[B_e2] = in.blocks[B_e0] + in.blocks[B_e1];
    in.blocks[B_e3] = in.blocks[B_e1];
    in.blocks[B_a2] = in.blocks[B_a0] + in.blocks[B_a1];
    in.blocks[B_a3] = in.blocks[B_a1];
    if (sys.has_pml()) {
      in.blocks[B_r2] = in.blocks[B_r0] + in.blocks[B_r1];
      in.blocks[B_r3] = in.blocks[B_r1];
      in.blocks[B_q2] = in.blocks[B_q0] + in.blocks[B_q1];
      in.blocks[B_q3] = in.blocks[B_q1];
    }

    try {
      out.newton_iterations += sys.newton_solve(in, opt.newton);
    } catch (const NewtonFailure&) {
      // homotopy in the quadratic coefficient for slabs where plain Newton
      // leaves its attraction basin (badly resolved transients)
      in.blocks[B_e2] = in.blocks[B_e0] + in.blocks[B_e1];
      in.blocks[B_e3] = in.blocks[B_e1];
      in.blocks[B_a2] = in.blocks[B_a0] + in.blocks[B_a1];
      in.blocks[B_a3] = in.blocks[B_a1];
      try {
        for (double s : {0.25, 0.5, 0.75, 1.0}) {
          CoeffFn scaled = [chi, s](double x) { return s * chi(x); };
          SlabSystem stage(space, mat, scaled, opt.k, opt.abs_mode, opt.pml);
          out.newton_iterations += stage.newton_solve(in, opt.newton);
        }
      } catch (const NewtonFailure& nf) {
        throw NewtonFailure("slab " + std::to_string(n) + ": " + nf.what(),
                            nf.residual_history);
      }
    }

    Vec u2, p2, u3, p3;
    sys.recover_auxiliary(in, u2, p2, u3, p3);

    for (size_t t = 0; t < tap_dofs.size(); ++t) {
      out.tap_series[t].value[n] = in.blocks[B_e2][tap_dofs[t]];
      out.tap_series[t].deriv[n] = in.blocks[B_e3][tap_dofs[t]] / k;
    }

    const bool want_state = static_cast<bool>(opt.observer) || n == opt.n_slabs;
    if (want_state) {
      SlabState st;
      st.k = k;
      st.index = n;
      st.t_start = t_lo;
      st.u = {in.blocks[B_u0], in.blocks[B_u1], u2, u3};
      st.p = {in.blocks[B_p0], in.blocks[B_p1], p2, p3};
      st.a = {in.blocks[B_a0], in.blocks[B_a1], in.blocks[B_a2], in.blocks[B_a3]};
      st.e = {in.blocks[B_e0], in.blocks[B_e1], in.blocks[B_e2], in.blocks[B_e3]};
      if (sys.has_pml()) {
        st.r = {in.blocks[B_r0], in.blocks[B_r1], in.blocks[B_r2], in.blocks[B_r3]};
        st.q = {in.blocks[B_q0], in.blocks[B_q1], in.blocks[B_q2], in.blocks[B_q3]};
      }
      if (opt.observer) opt.observer(st);
      if (n == opt.n_slabs) out.final_slab = std::move(st);
    }

    // exact C1 hand-off
    in.blocks[B_u0] = u2;
    in.blocks[B_u1] = u3;
    in.blocks[B_p0] = p2;
    in.blocks[B_p1] = p3;
    in.blocks[B_a0] = in.blocks[B_a2];
    in.blocks[B_a1] = in.blocks[B_a3];
    in.blocks[B_e0] = in.blocks[B_e2];
    in.blocks[B_e1] = in.blocks[B_e3];
    if (sys.has_pml()) {
      in.blocks[B_r0] = in.blocks[B_r2];
      in.blocks[B_r1] = in.blocks[B_r3];
      in.blocks[B_q0] = in.blocks[B_q2];
      in.blocks[B_q1] = in.blocks[B_q3];
    }
    if (has_f) {
      std::swap(f_lo, f_hi);
      std::swap(df_lo, df_hi);
    }
  }
  return out;
}

}  // namespace thz
