// SPDX-License-Identifier: Apache-2.0
// Test-only reference: the local slab problem assembled literally over all 16
// Hermite coefficient blocks (continuity rows, endpoint collocation rows,
// piecewise-constant-test variational rows), solved densely with a
// finite-difference Newton. Kept independent of the condensed production path.
#pragma once

#include <Eigen/Dense>
#include <functional>

#include "thz/fem.hpp"
#include "thz/gcc.hpp"

namespace oracle {

using thz::Vec;
using Mat = Eigen::MatrixXd;

struct SlabProblem {
  const thz::CubicFeSpace* space;
  thz::Material mat;
  std::function<double(double)> chi;  // chi2 * sign(x)
  double k;
  bool magnitude_abs = false;
  // history (values and k-scaled derivatives at t_{n-1})
  Vec u0, u1, p0, p1, a0, a1, e0, e1;
  Vec f0, f1, f2, f3;  // Hermite forcing coefficients
  double g_left[2] = {0, 0}, g_right[2] = {0, 0};
};

struct SlabSolution {
  Vec u[4], p[4], a[4], e[4];
};

namespace detail {

inline Mat dense_mass(const thz::CubicFeSpace& s) {
  Mat M = Mat::Zero(s.n_dof(), s.n_dof());
  for (int e = 0; e < s.n_elem(); ++e) {
    const double h = s.mesh.width(e);
    for (int q = 0; q < 4; ++q) {
      const double xh = thz::GaussRule4::pts[q], w = thz::GaussRule4::wts[q] * h;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          M(s.dof0(e) + i, s.dof0(e) + j) +=
              w * thz::lagrange3_value(i, xh) * thz::lagrange3_value(j, xh);
    }
  }
  return M;
}

inline Mat dense_stiffness(const thz::CubicFeSpace& s) {
  Mat K = Mat::Zero(s.n_dof(), s.n_dof());
  for (int e = 0; e < s.n_elem(); ++e) {
    const double h = s.mesh.width(e);
    for (int q = 0; q < 4; ++q) {
      const double xh = thz::GaussRule4::pts[q], w = thz::GaussRule4::wts[q] * h;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          K(s.dof0(e) + i, s.dof0(e) + j) +=
              w * thz::lagrange3_deriv(i, xh) * thz::lagrange3_deriv(j, xh) / (h * h);
    }
  }
  return K;
}

// weak vector of chi(x) * a(x) * b(x) tested against every basis function
inline Vec chi_weak(const SlabProblem& pr, const Vec& a, const Vec& b, bool abs_first) {
  const auto& s = *pr.space;
  Vec out = Vec::Zero(s.n_dof());
  for (int e = 0; e < s.n_elem(); ++e) {
    const double x0 = s.mesh.vertices[e], h = s.mesh.width(e);
    const double ce = pr.chi ? pr.chi(x0 + 0.5 * h) : 0.0;
    if (ce == 0.0) continue;
    for (int q = 0; q < 4; ++q) {
      const double xh = thz::GaussRule4::pts[q], w = thz::GaussRule4::wts[q] * h;
      double av = 0, bv = 0;
      for (int l = 0; l < 4; ++l) {
        av += a[s.dof0(e) + l] * thz::lagrange3_value(l, xh);
        bv += b[s.dof0(e) + l] * thz::lagrange3_value(l, xh);
      }
      const double first = (abs_first && pr.magnitude_abs) ? std::abs(av) : av;
      for (int i = 0; i < 4; ++i)
        out[s.dof0(e) + i] += w * ce * first * bv * thz::lagrange3_value(i, xh);
    }
  }
  return out;
}

}  // namespace detail

// residual of the 8 unknown blocks [u2,u3,p2,p3,a2,a3,e2,e3]; continuity rows
// are eliminated by construction (w0, w1 enter as data)
inline Vec residual(const SlabProblem& pr, const Mat& M, const Mat& K, const Vec& x) {
  const auto& s = *pr.space;
  const int J = s.n_dof();
  auto blk = [&](int b) { return x.segment(b * J, J); };
  Vec u2 = blk(0), u3 = blk(1), p2 = blk(2), p3 = blk(3), a2 = blk(4), a3 = blk(5), e2 = blk(6),
      e3 = blk(7);
  const double k = pr.k, g0 = pr.mat.gamma0, nt2 = pr.mat.nu_t2(), eD = pr.mat.eps_delta(),
               eW = pr.mat.eps_omega;
  const double c0 = 0.5, c1 = 1.0 / 12.0, c2 = 0.5, c3 = -1.0 / 12.0;
  auto tint = [&](const Vec& w0, const Vec& w1, const Vec& w2, const Vec& w3) {
    return Vec(c0 * w0 + c1 * w1 + c2 * w2 + c3 * w3);
  };

  Vec R(8 * J);
  // collocation rows at t_n
  R.segment(0 * J, J) = M * Vec(p3 / k + g0 * p2 - u2);
  R.segment(1 * J, J) = M * Vec(u3 / k + nt2 * p2 - nt2 * eD * e2);
  R.segment(2 * J, J) = M * Vec(eW * e3 / k - g0 * p2 - a2) +
                        (2.0 / k) * detail::chi_weak(pr, e2, e3, true);
  R.segment(3 * J, J) =
      M * Vec(a3 / k + nt2 * eD * e2 - nt2 * p2 - pr.f2) + K * e2;
  // variational rows
  R.segment(4 * J, J) =
      M * Vec((p2 - pr.p0) + g0 * k * tint(pr.p0, pr.p1, p2, p3) - k * tint(pr.u0, pr.u1, u2, u3));
  R.segment(5 * J, J) = M * Vec(nt2 * k * tint(pr.p0, pr.p1, p2, p3) -
                                eD * nt2 * k * tint(pr.e0, pr.e1, e2, e3) + (u2 - pr.u0));
  R.segment(6 * J, J) =
      M * Vec(eW * (e2 - pr.e0) - g0 * k * tint(pr.p0, pr.p1, p2, p3) -
              k * tint(pr.a0, pr.a1, a2, a3)) +
      detail::chi_weak(pr, e2, e2, true) - detail::chi_weak(pr, pr.e0, pr.e0, true);
  R.segment(7 * J, J) = k * (K * tint(pr.e0, pr.e1, e2, e3)) +
                        M * Vec(eD * nt2 * k * tint(pr.e0, pr.e1, e2, e3) -
                                nt2 * k * tint(pr.p0, pr.p1, p2, p3) + (a2 - pr.a0) -
                                k * tint(pr.f0, pr.f1, pr.f2, pr.f3));

  // Dirichlet pins replace the e-equation rows at the boundary dofs
  for (int bd : {0, J - 1}) {
    const double gv = (bd == 0) ? pr.g_left[0] : pr.g_right[0];
    const double gd = (bd == 0) ? pr.g_left[1] : pr.g_right[1];
    R[3 * J + bd] = e2[bd] - gv;  // collocation e-row pins e2
    R[7 * J + bd] = e3[bd] - gd;  // variational e-row pins e3
  }
  return R;
}

inline SlabSolution solve(const SlabProblem& pr) {
  const auto& s = *pr.space;
  const int J = s.n_dof();
  const Mat M = detail::dense_mass(s);
  const Mat K = detail::dense_stiffness(s);

  Vec x = Vec::Zero(8 * J);
  // warm start from continuity
  x.segment(0 * J, J) = pr.u0;
  x.segment(2 * J, J) = pr.p0;
  x.segment(4 * J, J) = pr.a0;
  x.segment(6 * J, J) = pr.e0;

  for (int it = 0; it < 50; ++it) {
    Vec R = residual(pr, M, K, x);
    if (R.norm() < 1e-13 * std::max(1.0, x.norm())) break;
    // finite-difference Jacobian, independent of any hand derivation
    Mat Jm(8 * J, 8 * J);
    const double h = 1e-7;
    for (int j = 0; j < 8 * J; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      Jm.col(j) = (residual(pr, M, K, xp) - residual(pr, M, K, xm)) / (2.0 * h);
    }
    Vec dx = Jm.partialPivLu().solve(-R);
    x += dx;
    if (dx.norm() < 1e-13 * std::max(1.0, x.norm())) break;
  }

  SlabSolution sol;
  auto blk = [&](int b) { return Vec(x.segment(b * J, J)); };
  sol.u[0] = pr.u0;
  sol.u[1] = pr.u1;
  sol.u[2] = blk(0);
  sol.u[3] = blk(1);
  sol.p[0] = pr.p0;
  sol.p[1] = pr.p1;
  sol.p[2] = blk(2);
  sol.p[3] = blk(3);
  sol.a[0] = pr.a0;
  sol.a[1] = pr.a1;
  sol.a[2] = blk(4);
  sol.a[3] = blk(5);
  sol.e[0] = pr.e0;
  sol.e[1] = pr.e1;
  sol.e[2] = blk(6);
  sol.e[3] = blk(7);
  return sol;
}

}  // namespace oracle
