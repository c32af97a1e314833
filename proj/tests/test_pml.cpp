// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "thz/gcc.hpp"
#include "thz/pml.hpp"

using namespace thz;

namespace {

// sin^2-windowed tone entering from the left
BoundarySignal pulse_bc(double width, double f0) {
  BoundarySignal bc;
  bc.left = [width, f0](double t) {
    if (t <= 0.0 || t >= width) return std::make_pair(0.0, 0.0);
    const double w = std::sin(M_PI * t / width);
    const double dw = M_PI / width * std::cos(M_PI * t / width);
    const double c = std::sin(2.0 * M_PI * f0 * t);
    const double dc = 2.0 * M_PI * f0 * std::cos(2.0 * M_PI * f0 * t);
    return std::make_pair(w * w * c, 2.0 * w * dw * c + w * w * dc);
  };
  return bc;
}

Material vacuum() {
  Material m;
  m.gamma0 = 0.0;
  m.nu_t = 1.0;
  m.eps_omega = 1.0;
  m.eps_Omega = 1.0;
  return m;
}

InitialData zero_init(const CubicFeSpace& space) {
  InitialData init;
  init.u0 = init.p0 = init.a0 = init.e0 = Vec::Zero(space.n_dof());
  std::array<Vec, 4> dt0;
  dt0.fill(Vec::Zero(space.n_dof()));
  init.derivatives = dt0;
  return init;
}

// discrete L2 energy of the e-field over elements with x <= cutoff
double region_energy(const CubicFeSpace& space, const Vec& e, double cutoff) {
  double acc = 0.0;
  for (int el = 0; el < space.n_elem(); ++el) {
    const double a = space.mesh.vertices[el], h = space.mesh.width(el);
    if (a + 0.5 * h > cutoff) continue;
    for (int q = 0; q < 4; ++q) {
      double v = 0;
      for (int l = 0; l < 4; ++l)
        v += e[space.dof0(el) + l] * lagrange3_value(l, GaussRule4::pts[q]);
      acc += GaussRule4::wts[q] * h * v * v;
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("profile values at the interface, endpoint and midpoint") {
  PmlProfile p;
  p.x_start = 1.0;
  p.width = 0.5;
  p.sigma_max = 40.0;
  p.grade_power = 2;
  auto at_if = pml_profiles(1.0, p);
  CHECK(at_if.sigma == 0.0);
  CHECK(at_if.alpha == 0.0);
  CHECK(at_if.kappa == 1.0);
  auto at_end = pml_profiles(1.5, p);
  CHECK(at_end.sigma == doctest::Approx(40.0));
  auto at_mid = pml_profiles(1.25, p);
  CHECK(at_mid.sigma == doctest::Approx(10.0));
  CHECK(at_mid.alpha == at_mid.sigma);
  CHECK(at_mid.sigma_tilde == at_mid.sigma);
  CHECK(at_mid.alpha_tilde == at_mid.sigma);
  CHECK(pml_profiles(0.9, p).sigma == 0.0);  // outside
  // monotone grading
  double prev = -1.0;
  for (double x = 1.0; x <= 1.5; x += 0.05) {
    CHECK(pml_profiles(x, p).sigma >= prev);
    prev = pml_profiles(x, p).sigma;
  }
}

TEST_CASE("sigma_max = 0 leaves the physical block bit-identical and R,Q at zero") {
  DomainSpec dom;
  dom.x_right = 1.0;
  dom.pml_width = 0.5;
  auto [mesh, space] = build_domain(dom, 8, 4);
  Material m = vacuum();
  m.eps_Omega = 1.5;
  m.gamma0 = 0.1;
  const double k = 0.05;

  PmlProfile off;
  off.x_start = 1.0;
  off.width = 0.5;
  off.sigma_max = 0.0;

  SlabSystem plain(space, m, nullptr, k);
  SlabSystem with_pml(space, m, nullptr, k, AbsMode::contraction, &off);

  SlabInputs in;
  for (auto& b : in.blocks) b = Vec();
  for (int b = 0; b < B_f0; ++b) in.blocks[b] = Vec::Zero(space.n_dof());
  for (int b : {B_r0, B_r1, B_r2, B_r3, B_q0, B_q1, B_q2, B_q3})
    in.blocks[b] = Vec::Zero(space.n_dof());
  in.blocks[B_e0] = space.interpolate([](double x) { return std::exp(-8.0 * (x - 0.4) * (x - 0.4)); });
  in.blocks[B_p0] = space.interpolate([](double x) { return 0.3 * std::sin(2.0 * x); });

  // the 4-block sub-matrix of the augmented jacobian equals the plain one
  Mat Jp = plain.jacobian(in).dense();
  Mat Ja = with_pml.jacobian(in).dense();
  const int J = space.n_dof();
  for (int i = 0; i < J; ++i)
    for (int s = 0; s < 4; ++s)
      for (int j = 0; j < J; ++j)
        for (int c = 0; c < 4; ++c)
          CHECK(Ja(with_pml.slot(i, s), with_pml.slot(j, c)) ==
                Jp(plain.slot(i, s), plain.slot(j, c)));

  // marching with the inert layer keeps the auxiliaries exactly zero
  MarchOptions opt;
  opt.n_slabs = 20;
  opt.k = k;
  opt.pml = &off;
  InitialData init = zero_init(space);
  init.e0 = in.blocks[B_e0];
  init.derivatives.reset();
  MarchResult res = march(space, m, nullptr, init, pulse_bc(0.4, 3.0), {}, opt);
  CHECK(res.final_slab.r[2].norm() <= 1e-13);
  CHECK(res.final_slab.q[2].norm() <= 1e-13);
}

TEST_CASE("R and Q stay zero until the pulse reaches the layer") {
  DomainSpec dom;
  dom.x_right = 2.0;
  dom.pml_width = 0.5;
  auto [mesh, space] = build_domain(dom, 48, 12);
  Material m = vacuum();
  PmlProfile pml;
  pml.x_start = 2.0;
  pml.width = 0.5;
  pml.sigma_max = PmlProfile::sigma_for_round_trip(0.5, 2);

  // pulse support reaches x = t; at t = 1.2 nothing has entered the layer
  MarchOptions opt;
  opt.n_slabs = 60;
  opt.k = 0.02;
  opt.pml = &pml;
  std::vector<double> rq_norm;
  opt.observer = [&](const SlabState& st) {
    rq_norm.push_back(st.r[2].lpNorm<Eigen::Infinity>() + st.q[2].lpNorm<Eigen::Infinity>());
  };
  march(space, m, nullptr, zero_init(space), pulse_bc(0.5, 4.0), {}, opt);
  CHECK(rq_norm[static_cast<size_t>(0.8 * 60) - 1] < 1e-11);  // t = 0.96 < 2
}

TEST_CASE("reflection from the layer is small and decays with width") {
  Material m = vacuum();
  const double f0 = 4.0, pulse_w = 0.5;

  // reference run on an enlarged domain: no reflection reaches the probe
  auto run = [&](double x_right, double pml_width, int ne, int ne_pml, double T) {
    DomainSpec dom;
    dom.x_right = x_right;
    dom.pml_width = pml_width;
    auto [mesh, space] = build_domain(dom, ne, ne_pml);
    PmlProfile pml;
    pml.x_start = x_right;
    pml.width = pml_width;
    if (pml_width > 0) pml.sigma_max = PmlProfile::sigma_for_round_trip(pml_width, 2);
    MarchOptions opt;
    opt.n_slabs = static_cast<int>(T / 0.005);
    opt.k = 0.005;
    opt.pml = pml_width > 0 ? &pml : nullptr;
    std::vector<Vec> snaps;
    opt.observer = [&](const SlabState& st) { snaps.push_back(st.e[2]); };
    march(space, m, nullptr, zero_init(space), pulse_bc(pulse_w, f0), {}, opt);
    return std::make_pair(space, snaps);
  };

  // incident energy measured once the pulse is fully inside [0, 1.5]
  auto [space_pml, snaps_pml] = run(1.5, 0.75, 96, 48, 3.2);
  const int n_mid = static_cast<int>(1.1 / 0.005) - 1;   // pulse inside, not yet at layer
  const int n_end = static_cast<int>(3.2 / 0.005) - 1;   // round trip completed
  const double incident = region_energy(space_pml, snaps_pml[n_mid], 1.5);
  const double reflected = region_energy(space_pml, snaps_pml[n_end], 1.4);
  CHECK(incident > 1e-4);
  CHECK(reflected / incident <= 1e-4);

  // reflection decreases monotonically as the width doubles
  double prev = 1.0;
  for (double w : {0.25, 0.5, 1.0}) {
    auto [space_w, snaps_w] = run(1.5, w, 96, static_cast<int>(w * 64), 3.2);
    const double inc = region_energy(space_w, snaps_w[n_mid], 1.5);
    const double ref = region_energy(space_w, snaps_w[n_end], 1.4);
    const double coef = ref / inc;
    CHECK(coef < prev);
    prev = coef;
  }
}

TEST_CASE("signal decays inside the layer after the pulse enters") {
  Material m = vacuum();
  DomainSpec dom;
  dom.x_right = 1.0;
  dom.pml_width = 0.5;
  auto [mesh, space] = build_domain(dom, 64, 32);
  PmlProfile pml;
  pml.x_start = 1.0;
  pml.width = 0.5;
  pml.sigma_max = PmlProfile::sigma_for_round_trip(0.5, 2);
  MarchOptions opt;
  opt.n_slabs = 500;
  opt.k = 0.005;
  opt.pml = &pml;
  std::vector<double> layer_energy;
  opt.observer = [&](const SlabState& st) {
    double acc = 0.0;
    for (int el = space.first_pml_elem(); el < space.n_elem(); ++el) {
      const double h = space.mesh.width(el);
      for (int q = 0; q < 4; ++q) {
        double v = 0;
        for (int l = 0; l < 4; ++l)
          v += st.e[2][space.dof0(el) + l] * lagrange3_value(l, GaussRule4::pts[q]);
        acc += GaussRule4::wts[q] * h * v * v;
      }
    }
    layer_energy.push_back(acc);
  };
  march(space, m, nullptr, zero_init(space), pulse_bc(0.4, 4.0), {}, opt);
  // pulse tail passes x=1 by t = 1.4; layer energy must then decay
  const size_t peak = std::max_element(layer_energy.begin(), layer_energy.end()) -
                      layer_energy.begin();
  CHECK(layer_energy[peak] > 1e-6);
  CHECK(layer_energy.back() < 1e-3 * layer_energy[peak]);
}
