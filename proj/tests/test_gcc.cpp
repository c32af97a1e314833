// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "support/unreduced_oracle.hpp"
#include "thz/gcc.hpp"
#include "thz/manufactured.hpp"

using namespace thz;

namespace {

Material test_material() {
  Material m;
  m.gamma0 = 0.3;
  m.nu_t = 1.5;
  m.eps_omega = 1.2;
  m.eps_Omega = 2.0;
  m.chi2 = 0.4;
  return m;
}

Vec smooth_random(const CubicFeSpace& space, std::mt19937& rng) {
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  const double a1 = amp(rng), a2 = amp(rng), ph = amp(rng);
  return space.interpolate(
      [&](double x) { return a1 * std::sin(2.0 * M_PI * x + ph) + a2 * x * (1.0 - x); });
}

SlabInputs random_inputs(const CubicFeSpace& space, double k, std::mt19937& rng,
                         bool with_forcing) {
  SlabInputs in;
  for (auto& b : in.blocks) b = Vec();
  for (int b : {B_e0, B_e1, B_a0, B_a1, B_p0, B_p1, B_u0, B_u1})
    in.blocks[b] = smooth_random(space, rng);
  for (int b : {B_e2, B_e3, B_a2, B_a3}) in.blocks[b] = Vec::Zero(space.n_dof());
  if (with_forcing)
    for (int b : {B_f0, B_f1, B_f2, B_f3}) in.blocks[b] = smooth_random(space, rng);
  std::uniform_real_distribution<double> g(-0.5, 0.5);
  in.g_left[0] = g(rng);
  in.g_left[1] = k * g(rng);
  in.g_right[0] = g(rng);
  in.g_right[1] = k * g(rng);
  return in;
}

}  // namespace

TEST_CASE("hermite basis values, derivatives and endpoint exceptions") {
  CHECK(hermite_eval(0, 0.0) == std::pair{1.0, 0.0});
  auto [v11, d11] = hermite_eval(1, 1.0);
  CHECK(v11 == doctest::Approx(0.0));
  CHECK(d11 == doctest::Approx(0.0));
  auto [v2, d2] = hermite_eval(2, 0.5);
  CHECK(v2 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d2 == doctest::Approx(1.5).epsilon(1e-15));
  auto [v1, d1] = hermite_eval(1, 0.0);
  CHECK(d1 == doctest::Approx(1.0));
  auto [v3, d3] = hermite_eval(3, 1.0);
  CHECK(d3 == doctest::Approx(1.0));
  for (double t : {0.1, 0.35, 0.8})
    CHECK(hermite_eval(0, t).first + hermite_eval(2, t).first == doctest::Approx(1.0));
  CHECK_THROWS_AS(hermite_eval(4, 0.5), std::out_of_range);
}

TEST_CASE("condensed slab solution equals the literal 16-block reference") {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 8, 0);  // 25 dofs

  for (int draw = 0; draw < 10; ++draw) {
    Material m;
    m.gamma0 = uni(rng);
    m.nu_t = 0.5 + 2.0 * uni(rng);
    m.eps_omega = 0.5 + uni(rng);
    m.eps_Omega = m.eps_omega + uni(rng);
    m.chi2 = (draw % 3 == 0) ? 0.0 : 0.5 * uni(rng);
    const double k = 0.05 + 0.2 * uni(rng);
    const double chiv = m.chi2;
    CoeffFn chi = [chiv](double) { return chiv; };

    SlabSystem sys(space, m, chi, k);
    SlabInputs in = random_inputs(space, k, rng, true);
    NewtonConfig cfg;
    cfg.abs_tol = 1e-13;
    cfg.rel_tol = 1e-14;
    cfg.max_iter = 30;
    sys.newton_solve(in, cfg);
    Vec u2, p2, u3, p3;
    sys.recover_auxiliary(in, u2, p2, u3, p3);

    oracle::SlabProblem pr;
    pr.space = &space;
    pr.mat = m;
    pr.chi = chi;
    pr.k = k;
    pr.u0 = in.blocks[B_u0];
    pr.u1 = in.blocks[B_u1];
    pr.p0 = in.blocks[B_p0];
    pr.p1 = in.blocks[B_p1];
    pr.a0 = in.blocks[B_a0];
    pr.a1 = in.blocks[B_a1];
    pr.e0 = in.blocks[B_e0];
    pr.e1 = in.blocks[B_e1];
    pr.f0 = in.blocks[B_f0];
    pr.f1 = in.blocks[B_f1];
    pr.f2 = in.blocks[B_f2];
    pr.f3 = in.blocks[B_f3];
    pr.g_left[0] = in.g_left[0];
    pr.g_left[1] = in.g_left[1];
    pr.g_right[0] = in.g_right[0];
    pr.g_right[1] = in.g_right[1];
    oracle::SlabSolution ref = oracle::solve(pr);

    auto rel = [](const Vec& a, const Vec& b) {
      return (a - b).norm() / std::max(1e-30, b.norm());
    };
    CHECK(rel(in.blocks[B_e2], ref.e[2]) < 1e-10);
    CHECK(rel(in.blocks[B_e3], ref.e[3]) < 1e-10);
    CHECK(rel(in.blocks[B_a2], ref.a[2]) < 1e-10);
    CHECK(rel(in.blocks[B_a3], ref.a[3]) < 1e-10);
    CHECK(rel(u2, ref.u[2]) < 1e-10);
    CHECK(rel(u3, ref.u[3]) < 1e-10);
    CHECK(rel(p2, ref.p[2]) < 1e-10);
    CHECK(rel(p3, ref.p[3]) < 1e-10);
  }
}

TEST_CASE("slab residual: zero data gives zero, linear case is affine") {
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 4, 0);
  Material m = test_material();
  const double k = 0.1;

  SlabSystem lin(space, m, nullptr, k);
  SlabInputs zero;
  for (auto& b : zero.blocks) b = Vec();
  for (int b = 0; b < B_f0; ++b) zero.blocks[b] = Vec::Zero(space.n_dof());
  CHECK(lin.residual(zero).norm() == 0.0);

  std::mt19937 rng(7);
  SlabInputs x = random_inputs(space, k, rng, false);
  SlabInputs y = random_inputs(space, k, rng, false);
  for (int b : {B_e2, B_e3, B_a2, B_a3}) {
    x.blocks[b] = smooth_random(space, rng);
    y.blocks[b] = smooth_random(space, rng);
  }
  SlabInputs xy = x;
  for (int b = 0; b < B_f0; ++b) xy.blocks[b] += y.blocks[b];
  Vec r = lin.residual(xy) - lin.residual(x) - lin.residual(y) + lin.residual(zero);
  CHECK(r.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("slab jacobian: constant when chi2 = 0, matches finite differences otherwise") {
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 4, 0);
  Material m = test_material();
  const double k = 0.12;
  std::mt19937 rng(11);

  SlabSystem lin(space, m, nullptr, k);
  SlabInputs a = random_inputs(space, k, rng, false);
  SlabInputs b = random_inputs(space, k, rng, false);
  for (int blk : {B_e2, B_e3, B_a2, B_a3}) {
    a.blocks[blk] = smooth_random(space, rng);
    b.blocks[blk] = smooth_random(space, rng);
  }
  CHECK((lin.jacobian(a).dense() - lin.jacobian(b).dense()).norm() == 0.0);

  const double chiv = m.chi2;
  SlabSystem nl(space, m, [chiv](double) { return chiv; }, k);
  SlabInputs base = a;
  BandMatrix J = nl.jacobian(base);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Vec dir(nl.system_size());
  for (int i = 0; i < dir.size(); ++i) dir[i] = uni(rng);
  dir *= 1e-5 / dir.norm();

  SlabInputs plus = base, minus = base;
  const int cs[4] = {2, 3, 0, 1};
  const int blks[4] = {B_e2, B_e3, B_a2, B_a3};
  for (int bi = 0; bi < 4; ++bi)
    for (int i = 0; i < space.n_dof(); ++i) {
      plus.blocks[blks[bi]][i] += dir[nl.slot(i, cs[bi])];
      minus.blocks[blks[bi]][i] -= dir[nl.slot(i, cs[bi])];
    }
  Vec fd = (nl.residual(plus) - nl.residual(minus)) / 2.0;
  Vec jd = J.multiply(dir);
  for (int s : {2, 3}) {
    fd[nl.slot(0, s)] = jd[nl.slot(0, s)] = 0.0;
    fd[nl.slot(space.n_dof() - 1, s)] = jd[nl.slot(space.n_dof() - 1, s)] = 0.0;
  }
  CHECK((fd - jd).norm() / jd.norm() < 1e-6);

  // at e = 0 the quadratic term contributes nothing to the jacobian
  SlabInputs at_zero = base;
  for (int blk = 0; blk < B_f0; ++blk) at_zero.blocks[blk].setZero();
  CHECK((nl.jacobian(at_zero).dense() - lin.jacobian(at_zero).dense()).norm() == 0.0);
}

TEST_CASE("recover_auxiliary closed forms") {
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 3, 0);
  Material m = test_material();
  const double k = 0.2;
  SlabSystem sys(space, m, nullptr, k);

  SlabInputs zero;
  for (auto& b : zero.blocks) b = Vec();
  for (int b = 0; b < B_f0; ++b) zero.blocks[b] = Vec::Zero(space.n_dof());
  Vec u2, p2, u3, p3;
  sys.recover_auxiliary(zero, u2, p2, u3, p3);
  CHECK(u3.norm() == 0.0);
  CHECK(p3.norm() == 0.0);

  // collocation identities at t_n after recovery (signs fixed by the
  // 16-block reference): p3 = k (u2 - Gamma0 p2), u3 = k nu_t^2 (eps_D e2 - p2)
  std::mt19937 rng(3);
  SlabInputs in = random_inputs(space, k, rng, false);
  in.blocks[B_e2] = smooth_random(space, rng);
  in.blocks[B_e3] = smooth_random(space, rng);
  sys.recover_auxiliary(in, u2, p2, u3, p3);
  Vec idp = p3 - k * (u2 - m.gamma0 * p2);
  Vec idu = u3 - k * m.nu_t2() * (m.eps_delta() * in.blocks[B_e2] - p2);
  CHECK(idp.lpNorm<Eigen::Infinity>() < 1e-12 * std::max(1.0, p3.lpNorm<Eigen::Infinity>()));
  CHECK(idu.lpNorm<Eigen::Infinity>() < 1e-12 * std::max(1.0, u3.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("initial time derivatives: closed-form cases") {
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 4, 0);
  Material m = test_material();
  SlabSystem sys(space, m, nullptr, 0.1);
  const int J = space.n_dof();

  auto zero = initial_time_derivatives(space, m, Vec::Zero(J), Vec::Zero(J), Vec::Zero(J),
                                       Vec::Zero(J), Vec::Zero(J), nullptr, sys.mass(),
                                       sys.stiffness());
  for (const Vec& v : zero) CHECK(v.norm() == 0.0);

  const double c = 0.7;
  auto d = initial_time_derivatives(space, m, Vec::Zero(J), Vec::Constant(J, c), Vec::Zero(J),
                                    Vec::Zero(J), Vec::Zero(J), nullptr, sys.mass(),
                                    sys.stiffness());
  CHECK((d[0] - Vec::Constant(J, -m.nu_t2() * c)).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((d[1] - Vec::Constant(J, -m.gamma0 * c)).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((d[2] - Vec::Constant(J, m.nu_t2() * c)).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((d[3] - Vec::Constant(J, m.gamma0 * c / m.eps_omega)).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("initial time derivatives match the analytic rates of a closed-form solution") {
  Material m = test_material();
  const double chi = 0.3;
  TravelingWaveSolution sol(m, chi, {{1.0, 1.0}, {2.0, 0.7}});
  DomainSpec dom;

  double err_coarse = 0.0, err_fine = 0.0;
  for (int lvl = 0; lvl < 2; ++lvl) {
    auto [mesh, space] = build_domain(dom, 8 << lvl, 0);
    SlabSystem sys(space, m, [chi](double) { return chi; }, 0.1);
    InitialData init = sol.initial_data(space, false);
    Vec f0 = space.interpolate([&](double x) { return sol.f(x, 0.0); });
    auto d = initial_time_derivatives(space, m, init.u0, init.p0, init.a0, init.e0, f0,
                                      [chi](double) { return chi; }, sys.mass(),
                                      sys.stiffness());
    Vec exact_da = space.interpolate([&](double x) { return sol.At(x, 0.0); });
    Vec exact_de = space.interpolate([&](double x) { return sol.Et(x, 0.0); });
    Vec diff = d[2] - exact_da;
    const double err = std::sqrt(diff.dot(sys.mass().multiply(diff)));
    (lvl == 0 ? err_coarse : err_fine) = err;
    CHECK((d[3] - exact_de).lpNorm<Eigen::Infinity>() < 1e-11);
  }
  CHECK(err_fine < err_coarse / 8.0);
}

TEST_CASE("newton: trivial and linear cases take at most one iteration") {
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 4, 0);
  Material m = test_material();
  const double k = 0.1;
  NewtonConfig cfg;

  SlabSystem lin(space, m, nullptr, k);
  SlabInputs zero;
  for (auto& b : zero.blocks) b = Vec();
  for (int b = 0; b < B_f0; ++b) zero.blocks[b] = Vec::Zero(space.n_dof());
  CHECK(lin.newton_solve(zero, cfg) <= 1);
  for (int b : {B_e2, B_e3, B_a2, B_a3}) CHECK(zero.blocks[b].norm() == 0.0);

  std::mt19937 rng(5);
  SlabInputs in = random_inputs(space, k, rng, true);
  CHECK(lin.newton_solve(in, cfg) == 1);
}

TEST_CASE("newton: quadratic convergence window for chi2 > 0") {
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 6, 0);
  Material m = test_material();
  const double k = 0.1, chi = 1.5;
  SlabSystem sys(space, m, [chi](double) { return chi; }, k);
  std::mt19937 rng(17);
  SlabInputs in = random_inputs(space, k, rng, false);
  in.blocks[B_e0] = 2.0 * in.blocks[B_e0];

  in.blocks[B_e2][0] = in.g_left[0];
  in.blocks[B_e3][0] = in.g_left[1];
  in.blocks[B_e2][space.n_dof() - 1] = in.g_right[0];
  in.blocks[B_e3][space.n_dof() - 1] = in.g_right[1];
  std::vector<double> hist{sys.residual(in).norm()};
  for (int it = 0; it < 8; ++it) {
    Vec rhs = -sys.residual(in);
    BandMatrix J = sys.jacobian(in);
    sys.pin_dirichlet(J, rhs);
    for (int s : {2, 3}) {
      rhs[sys.slot(0, s)] = 0.0;
      rhs[sys.slot(space.n_dof() - 1, s)] = 0.0;
    }
    J.factor();
    Vec delta = J.solve(rhs);
    const int cs[4] = {2, 3, 0, 1};
    const int blks[4] = {B_e2, B_e3, B_a2, B_a3};
    for (int bi = 0; bi < 4; ++bi)
      for (int i = 0; i < space.n_dof(); ++i)
        in.blocks[blks[bi]][i] += delta[sys.slot(i, cs[bi])];
    hist.push_back(sys.residual(in).norm());
    if (hist.back() < 1e-13) break;
  }
  REQUIRE(hist.back() < 1e-12);
  bool quadratic_seen = false;
  for (size_t i = 0; i + 1 < hist.size(); ++i)
    if (hist[i] < 1e-1 && hist[i] > 1e-7 && hist[i + 1] < 20.0 * hist[i] * hist[i])
      quadratic_seen = true;
  CHECK(quadratic_seen);
}

TEST_CASE("chi2 time integral telescopes to the endpoint difference") {
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 4, 0);
  Material m = test_material();
  const double k = 0.17, chi = 0.8;
  SlabSystem sys(space, m, [chi](double) { return chi; }, k);
  SlabSystem lin_sys(space, m, nullptr, k);
  std::mt19937 rng(23);

  SlabInputs in;
  for (auto& b : in.blocks) b = Vec();
  for (int b = 0; b < B_f0; ++b) in.blocks[b] = Vec::Zero(space.n_dof());
  in.blocks[B_e0] = smooth_random(space, rng);
  in.blocks[B_e1] = smooth_random(space, rng);
  in.blocks[B_e2] = smooth_random(space, rng);
  in.blocks[B_e3] = smooth_random(space, rng);

  // independent route: 4-point Gauss in time of d/dt(e^2) tested in space
  Vec ref = Vec::Zero(space.n_dof());
  for (int q = 0; q < 4; ++q) {
    const double th = GaussRule4::pts[q], wt = GaussRule4::wts[q];
    Vec e_t = Vec::Zero(space.n_dof()), de_t = Vec::Zero(space.n_dof());
    const Vec* blocks[4] = {&in.blocks[B_e0], &in.blocks[B_e1], &in.blocks[B_e2],
                            &in.blocks[B_e3]};
    for (int j = 0; j < 4; ++j) {
      auto [xi, dxi] = hermite_eval(j, th);
      e_t += xi * (*blocks[j]);
      de_t += (dxi / k) * (*blocks[j]);
    }
    for (int e = 0; e < space.n_elem(); ++e) {
      const double h = space.mesh.width(e);
      for (int g = 0; g < 4; ++g) {
        const double xh = GaussRule4::pts[g], w = GaussRule4::wts[g] * h;
        double ev = 0, dv = 0;
        for (int l = 0; l < 4; ++l) {
          ev += e_t[space.dof0(e) + l] * lagrange3_value(l, xh);
          dv += de_t[space.dof0(e) + l] * lagrange3_value(l, xh);
        }
        for (int i = 0; i < 4; ++i)
          ref[space.dof0(e) + i] += wt * k * w * chi * 2.0 * ev * dv * lagrange3_value(i, xh);
      }
    }
  }

  Vec with_chi = sys.residual(in);
  Vec without = lin_sys.residual(in);
  Vec chi_part = with_chi - without;
  Vec v2_row(space.n_dof());
  for (int i = 0; i < space.n_dof(); ++i) v2_row[i] = chi_part[sys.slot(i, 1)];
  CHECK((v2_row - ref).lpNorm<Eigen::Infinity>() <
        1e-12 * std::max(1.0, ref.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("march: zero data stays zero") {
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 4, 0);
  Material m = test_material();
  MarchOptions opt;
  opt.n_slabs = 5;
  opt.k = 0.1;
  opt.taps = {0.5};
  InitialData init;
  init.u0 = init.p0 = init.a0 = init.e0 = Vec::Zero(space.n_dof());
  MarchResult res = march(space, m, nullptr, init, {}, {}, opt);
  CHECK(res.tap_series[0].value.norm() == 0.0);
  CHECK(res.tap_series[0].deriv.norm() == 0.0);
}

TEST_CASE("march: free-space pulse arrives after the travel delay") {
  // chi2 = 0, eps_Delta = 0, Gamma0 = 0, eps_omega = 1: transport at unit speed
  Material m;
  m.gamma0 = 0.0;
  m.nu_t = 1.0;
  m.eps_omega = 1.0;
  m.eps_Omega = 1.0;
  DomainSpec dom;
  dom.x_right = 2.0;
  auto [mesh, space] = build_domain(dom, 64, 0);

  const double T = 1.75, width = 0.5, f0 = 4.0;
  MarchOptions opt;
  opt.n_slabs = 280;
  opt.k = T / opt.n_slabs;
  opt.taps = {0.5, 1.0};
  BoundarySignal bc;
  bc.left = [width, f0](double t) {
    if (t <= 0.0 || t >= width) return std::make_pair(0.0, 0.0);
    const double w = std::sin(M_PI * t / width);
    const double dw = M_PI / width * std::cos(M_PI * t / width);
    const double c = std::sin(2.0 * M_PI * f0 * t);
    const double dc = 2.0 * M_PI * f0 * std::cos(2.0 * M_PI * f0 * t);
    return std::make_pair(w * w * c, 2.0 * w * dw * c + w * w * dc);
  };
  InitialData init;
  init.u0 = init.p0 = init.a0 = init.e0 = Vec::Zero(space.n_dof());
  std::array<Vec, 4> dt0;
  dt0.fill(Vec::Zero(space.n_dof()));
  init.derivatives = dt0;
  MarchResult res = march(space, m, nullptr, init, bc, {}, opt);

  Eigen::VectorXd g(opt.n_slabs + 1);
  for (int n = 0; n <= opt.n_slabs; ++n) g[n] = bc.left(n * opt.k).first;
  for (size_t tp = 0; tp < opt.taps.size(); ++tp) {
    const auto& s = res.tap_series[tp];
    int best_lag = -1;
    double best = -1.0;
    for (int lag = 0; lag <= opt.n_slabs; ++lag) {
      double acc = 0.0;
      for (int n = 0; n + lag <= opt.n_slabs; ++n) acc += g[n] * s.value[n + lag];
      if (acc > best) {
        best = acc;
        best_lag = lag;
      }
    }
    const int expect = static_cast<int>(std::lround(opt.taps[tp] / opt.k));
    CHECK(std::abs(best_lag - expect) <= 1);
  }
}

TEST_CASE("march: global C1 continuity asserted on slab copies") {
  Material m = test_material();
  const double chi = 0.2;
  TravelingWaveSolution sol(m, chi, {{1.0, 1.0}, {2.0, 0.8}});
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 8, 0);
  MarchOptions opt;
  opt.n_slabs = 6;
  opt.k = 0.05;

  std::vector<SlabState> states;
  opt.observer = [&](const SlabState& st) { states.push_back(st); };
  march(space, m, [chi](double) { return chi; }, sol.initial_data(space, true),
        sol.boundary(0.0, 1.0), sol.forcing(), opt);

  REQUIRE(states.size() == 6);
  for (size_t i = 0; i + 1 < states.size(); ++i) {
    const auto &a = states[i], &b = states[i + 1];
    const std::array<Vec, 4>* pa[4] = {&a.e, &a.a, &a.p, &a.u};
    const std::array<Vec, 4>* pb[4] = {&b.e, &b.a, &b.p, &b.u};
    for (int f = 0; f < 4; ++f) {
      CHECK(((*pa[f])[2] - (*pb[f])[0]).lpNorm<Eigen::Infinity>() <= 1e-12);
      CHECK(((*pa[f])[3] - (*pb[f])[1]).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
}

TEST_CASE("collocation residual check on a solved slab and a corrupted one") {
  Material m = test_material();
  const double chi = 0.2;
  TravelingWaveSolution sol(m, chi, {{1.0, 1.0}});
  DomainSpec dom;
  auto [mesh, space] = build_domain(dom, 8, 0);
  MarchOptions opt;
  opt.n_slabs = 2;
  opt.k = 0.05;
  opt.newton.abs_tol = 1e-12;

  SlabState last;
  opt.observer = [&](const SlabState& st) { last = st; };
  march(space, m, [chi](double) { return chi; }, sol.initial_data(space, true),
        sol.boundary(0.0, 1.0), sol.forcing(), opt);

  SlabSystem sys(space, m, [chi](double) { return chi; }, opt.k);
  Vec f2 = space.interpolate([&](double x) { return sol.f(x, 2 * opt.k); });
  auto norms = sys.collocation_residuals(last, f2);
  for (double n : norms) CHECK(n <= 10.0 * opt.newton.abs_tol);

  SlabState bad = last;
  bad.e[3].array() += 1e-3;
  auto bad_norms = sys.collocation_residuals(bad, f2);
  CHECK(bad_norms[2] >= 1e3 * std::max(norms[2], 1e-15));
}

TEST_CASE("manufactured solution converges at fourth order (coarse ladder)") {
  Material m = test_material();
  ConvergenceSetup setup;
  setup.material = m;
  setup.chi = 0.1;
  setup.levels = 3;
  setup.t_final = 1.0;
  auto rows = run_convergence(setup);
  REQUIRE(rows.size() == 3);
  for (int fi = 0; fi < 4; ++fi) {
    CHECK(rows[2].eoc_linf[fi] > 3.4);
    CHECK(rows[2].eoc_l2[fi] > 3.4);
  }
}
