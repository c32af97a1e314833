// SPDX-License-Identifier: Apache-2.0
#include "thz/manufactured.hpp"

#include <cmath>

namespace thz {

TravelingWaveSolution::TravelingWaveSolution(const Material& mat, double chi,
                                             std::vector<Wave> waves)
    : mat_(mat), chi_(chi) {
  mat_.validate();
  const double nt2 = mat_.nu_t2(), g0 = mat_.gamma0, eD = mat_.eps_delta();
  for (const Wave& w : waves) {
    Comp c;
    c.kap = 2.0 * M_PI * w.omega;
    c.om = 2.0 * M_PI * w.omega * w.speed;
    const double d = nt2 - c.om * c.om;
    const double det = d * d + g0 * g0 * c.om * c.om;
    if (det < 1e-12)
      throw std::invalid_argument("TravelingWaveSolution: component at the Lorentz resonance");
    c.Ap = eD * nt2 * d / det;
    c.Bp = eD * nt2 * g0 * c.om / det;
    comps_.push_back(c);
  }
}

double TravelingWaveSolution::E(double x, double t) const {
  double s = 0;
  for (const Comp& c : comps_) s += std::sin(c.kap * x - c.om * t);
  return s;
}
double TravelingWaveSolution::Et(double x, double t) const {
  double s = 0;
  for (const Comp& c : comps_) s += -c.om * std::cos(c.kap * x - c.om * t);
  return s;
}
double TravelingWaveSolution::Ett(double x, double t) const {
  double s = 0;
  for (const Comp& c : comps_) s += -c.om * c.om * std::sin(c.kap * x - c.om * t);
  return s;
}
double TravelingWaveSolution::Ettt(double x, double t) const {
  double s = 0;
  for (const Comp& c : comps_) s += c.om * c.om * c.om * std::cos(c.kap * x - c.om * t);
  return s;
}
double TravelingWaveSolution::Exx(double x, double t) const {
  double s = 0;
  for (const Comp& c : comps_) s += -c.kap * c.kap * std::sin(c.kap * x - c.om * t);
  return s;
}
double TravelingWaveSolution::Exxt(double x, double t) const {
  double s = 0;
  for (const Comp& c : comps_) s += c.kap * c.kap * c.om * std::cos(c.kap * x - c.om * t);
  return s;
}
double TravelingWaveSolution::P(double x, double t) const {
  double s = 0;
  for (const Comp& c : comps_) {
    const double th = c.kap * x - c.om * t;
    s += c.Ap * std::sin(th) + c.Bp * std::cos(th);
  }
  return s;
}
double TravelingWaveSolution::Pt(double x, double t) const {
  double s = 0;
  for (const Comp& c : comps_) {
    const double th = c.kap * x - c.om * t;
    s += -c.Ap * c.om * std::cos(th) + c.Bp * c.om * std::sin(th);
  }
  return s;
}
double TravelingWaveSolution::Ptt(double x, double t) const {
  double s = 0;
  for (const Comp& c : comps_) {
    const double th = c.kap * x - c.om * t;
    s += -c.Ap * c.om * c.om * std::sin(th) - c.Bp * c.om * c.om * std::cos(th);
  }
  return s;
}
double TravelingWaveSolution::U(double x, double t) const {
  return Pt(x, t) + mat_.gamma0 * P(x, t);
}
double TravelingWaveSolution::Ut(double x, double t) const {
  return Ptt(x, t) + mat_.gamma0 * Pt(x, t);
}
double TravelingWaveSolution::A(double x, double t) const {
  return mat_.eps_omega * Et(x, t) - mat_.gamma0 * P(x, t) + 2.0 * chi_ * E(x, t) * Et(x, t);
}
double TravelingWaveSolution::At(double x, double t) const {
  const double e = E(x, t), et = Et(x, t), ett = Ett(x, t);
  return mat_.eps_omega * ett - mat_.gamma0 * Pt(x, t) + 2.0 * chi_ * (et * et + e * ett);
}
double TravelingWaveSolution::f(double x, double t) const {
  return At(x, t) - Exx(x, t) + mat_.eps_delta() * mat_.nu_t2() * E(x, t) -
         mat_.nu_t2() * P(x, t);
}
double TravelingWaveSolution::ft(double x, double t) const {
  const double e = E(x, t), et = Et(x, t), ett = Ett(x, t), ettt = Ettt(x, t);
  const double att = mat_.eps_omega * ettt - mat_.gamma0 * Ptt(x, t) +
                     2.0 * chi_ * (3.0 * et * ett + e * ettt);
  return att - Exxt(x, t) + mat_.eps_delta() * mat_.nu_t2() * Et(x, t) -
         mat_.nu_t2() * Pt(x, t);
}

InitialData TravelingWaveSolution::initial_data(const CubicFeSpace& space,
                                                bool analytic_derivatives) const {
  InitialData d;
  d.u0 = space.interpolate([&](double x) { return U(x, 0.0); });
  d.p0 = space.interpolate([&](double x) { return P(x, 0.0); });
  d.a0 = space.interpolate([&](double x) { return A(x, 0.0); });
  d.e0 = space.interpolate([&](double x) { return E(x, 0.0); });
  if (analytic_derivatives) {
    std::array<Vec, 4> dt;
    dt[0] = space.interpolate([&](double x) { return Ut(x, 0.0); });
    dt[1] = space.interpolate([&](double x) { return Pt(x, 0.0); });
    dt[2] = space.interpolate([&](double x) { return At(x, 0.0); });
    dt[3] = space.interpolate([&](double x) { return Et(x, 0.0); });
    d.derivatives = dt;
  }
  return d;
}

BoundarySignal TravelingWaveSolution::boundary(double x_left, double x_right) const {
  BoundarySignal bc;
  bc.left = [this, x_left](double t) { return std::make_pair(E(x_left, t), Et(x_left, t)); };
  bc.right = [this, x_right](double t) { return std::make_pair(E(x_right, t), Et(x_right, t)); };
  return bc;
}

Forcing TravelingWaveSolution::forcing() const {
  Forcing fr;
  fr.value = [this](double x, double t) { return f(x, t); };
  fr.dt = [this](double x, double t) { return ft(x, t); };
  return fr;
}

namespace {

// spatial L2 of (FE coefficients minus analytic) over the physical region
double l2_err(const CubicFeSpace& space, const Vec& coeffs,
              const std::function<double(double)>& exact) {
  double acc = 0;
  for (int e = 0; e < space.n_elem(); ++e) {
    if (space.mesh.kinds[e] != ElemKind::physical) continue;
    const double a = space.mesh.vertices[e], h = space.mesh.width(e);
    const int d0 = space.dof0(e);
    for (int q = 0; q < 4; ++q) {
      const double xh = GaussRule4::pts[q];
      double v = 0;
      for (int l = 0; l < 4; ++l) v += coeffs[d0 + l] * lagrange3_value(l, xh);
      const double diff = v - exact(a + h * xh);
      acc += GaussRule4::wts[q] * h * diff * diff;
    }
  }
  return acc;
}

}  // namespace

std::vector<ConvergenceRow> run_convergence(const ConvergenceSetup& s) {
  std::vector<ConvergenceRow> rows;
  TravelingWaveSolution sol(s.material, s.chi, s.waves);

  for (int lvl = 0; lvl < s.levels; ++lvl) {
    const int n_elem = s.base_elems << lvl;
    const int n_slabs = s.base_slabs << lvl;
    const double k = s.t_final / n_slabs;

    DomainSpec dom;
    dom.x_left = s.x_left;
    dom.x_right = s.x_right;
    dom.pml_width = s.with_pml ? s.pml_width : 0.0;
    const int pml_elems = s.with_pml ? (s.pml_elems_base << lvl) : 0;
    auto [mesh, space] = build_domain(dom, n_elem, pml_elems);

    PmlProfile pml;
    if (s.with_pml) {
      pml.x_start = s.x_right;
      pml.width = s.pml_width;
      pml.sigma_max = PmlProfile::sigma_for_round_trip(s.pml_width, 2);
    }

    Forcing fr = sol.forcing();
    if (s.with_pml) {
      const double L = s.x_right;
      auto base = sol.forcing();
      fr.value = [base, L](double x, double t) { return x <= L ? base.value(x, t) : 0.0; };
      fr.dt = [base, L](double x, double t) { return x <= L ? base.dt(x, t) : 0.0; };
    }

    InitialData init = sol.initial_data(space, s.analytic_initial_rates);
    if (s.with_pml) {
      // fields start at zero inside the layer
      for (int i = 0; i < space.n_dof(); ++i) {
        if (space.dof_x[i] > s.x_right) {
          init.u0[i] = init.p0[i] = init.a0[i] = init.e0[i] = 0.0;
        }
      }
    }
    BoundarySignal bc = sol.boundary(s.x_left, s.x_right + (s.with_pml ? s.pml_width : 0.0));
    if (s.with_pml) bc.right = [](double) { return std::make_pair(0.0, 0.0); };

    struct Acc {
      double linf2[4] = {0, 0, 0, 0};
      double l2l2[4] = {0, 0, 0, 0};
    } acc;
    auto field_fn = [&](int fi, double t) {
      return std::function<double(double)>([&sol, fi, t](double x) {
        switch (fi) {
          case 0: return sol.E(x, t);
          case 1: return sol.A(x, t);
          case 2: return sol.P(x, t);
          default: return sol.U(x, t);
        }
      });
    };

    MarchOptions opt;
    opt.n_slabs = n_slabs;
    opt.k = k;
    opt.newton = s.newton;
    opt.pml = s.with_pml ? &pml : nullptr;
    opt.observer = [&](const SlabState& st) {
      const std::array<const std::array<Vec, 4>*, 4> fields = {&st.e, &st.a, &st.p, &st.u};
      const double t1 = st.t_start + st.k;
      for (int fi = 0; fi < 4; ++fi) {
        const double end_err = l2_err(space, (*fields[fi])[2], field_fn(fi, t1));
        acc.linf2[fi] = std::max(acc.linf2[fi], end_err);
        for (int q = 0; q < 4; ++q) {
          const double th = GaussRule4::pts[q];
          Vec v = Vec::Zero(space.n_dof());
          for (int j = 0; j < 4; ++j) v += hermite_eval(j, th).first * (*fields[fi])[j];
          acc.l2l2[fi] +=
              GaussRule4::wts[q] * st.k * l2_err(space, v, field_fn(fi, st.t_start + th * st.k));
        }
      }
    };

    const double chi_c = s.chi;
    march(space, s.material, [chi_c](double) { return chi_c; }, init, bc, fr, opt);

    ConvergenceRow row{};
    row.level = lvl;
    row.n_elem = n_elem;
    row.n_slabs = n_slabs;
    row.k = k;
    for (int fi = 0; fi < 4; ++fi) {
      row.linf_l2[fi] = std::sqrt(acc.linf2[fi]);
      row.l2_l2[fi] = std::sqrt(acc.l2l2[fi]);
      if (!rows.empty()) {
        row.eoc_linf[fi] = std::log2(rows.back().linf_l2[fi] / row.linf_l2[fi]);
        row.eoc_l2[fi] = std::log2(rows.back().l2_l2[fi] / row.l2_l2[fi]);
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace thz
