// SPDX-License-Identifier: Apache-2.0
#include "thz/ocp.hpp"

#include <cmath>

namespace thz {

using ad::DT;
using ad::Tape;
using ad::Tensor;

Eigen::VectorXd PulseParams::flat() const {
  Eigen::VectorXd x(dim());
  x[0] = tau;
  x[1] = p;
  const int m = n();
  for (int i = 0; i < m; ++i) {
    x[2 + i] = a[i];
    x[2 + m + i] = phi[i];
    x[2 + 2 * m + i] = zeta[i];
    x[2 + 3 * m + i] = f[i];
  }
  return x;
}

PulseParams PulseParams::from_flat(const Eigen::VectorXd& x, const PulseBounds& b) {
  PulseParams xi;
  xi.bounds = b;
  const int m = (static_cast<int>(x.size()) - 2) / 4;
  xi.tau = x[0];
  xi.p = x[1];
  xi.a.resize(m);
  xi.phi.resize(m);
  xi.zeta.resize(m);
  xi.f.resize(m);
  for (int i = 0; i < m; ++i) {
    xi.a[i] = x[2 + i];
    xi.phi[i] = x[2 + m + i];
    xi.zeta[i] = x[2 + 2 * m + i];
    xi.f[i] = x[2 + 3 * m + i];
  }
  return xi;
}

void PulseParams::validate() const {
  if (tau <= 0.0) throw std::invalid_argument("PulseParams: tau must be > 0");
  if (a.size() != phi.size() || a.size() != zeta.size() || a.size() != f.size())
    throw std::invalid_argument("PulseParams: component arrays must share a length");
}

PulseParams project_bounds(const PulseParams& xi) {
  auto clamp = [](double v, double hi) { return std::min(std::max(v, 0.0), hi); };
  PulseParams out = xi;
  out.tau = clamp(xi.tau, xi.bounds.tau_max);
  out.p = clamp(xi.p, xi.bounds.p_max);
  for (int i = 0; i < xi.n(); ++i) {
    out.a[i] = clamp(xi.a[i], xi.bounds.a_max);
    out.phi[i] = clamp(xi.phi[i], xi.bounds.phi_max);
    out.zeta[i] = clamp(xi.zeta[i], xi.bounds.zeta_max);
    out.f[i] = clamp(xi.f[i], xi.bounds.f_max);
  }
  return out;
}

std::pair<DT, DT> sample_pulse(Tape& tape, DT xi_flat, int m, const Eigen::VectorXd& times) {
  using namespace ad;
  const int s = static_cast<int>(times.size());
  if (xi_flat.val().numel() != 2 + 4 * m)
    throw std::invalid_argument("sample_pulse: parameter vector length mismatch");
  if (xi_flat.val().data[0] == 0.0) throw std::invalid_argument("sample_pulse: tau = 0");

  DT tau = slice(xi_flat, 0, 1);
  DT p = slice(xi_flat, 1, 1);
  DT t = tape.constant(Tensor::from_vec(times));
  DT ones = tape.constant(Tensor::from_vec(Eigen::VectorXd::Ones(s)));

  // envelope exp(-X^p), X = 2 ln2 (t/tau)^2
  const double c2 = 2.0 * std::log(2.0);
  DT X = scale(square(div(t, tau)), c2);
  DT env = exp_(neg(pow_tp(X, p)));
  // d env = -env * p X^{p-1} dX, dX = 4 ln2 t / tau^2
  DT dX = scale(div(t, square(tau)), 2.0 * c2);
  DT denv = neg(mul(env, mul(mul(pow_tp(X, shift(p, -1.0)), p), dX)));

  DT carrier, dcarrier;
  bool first = true;
  for (int i = 0; i < m; ++i) {
    DT ai = slice(xi_flat, 2 + i, 1);
    DT phii = slice(xi_flat, 2 + m + i, 1);
    DT zetai = slice(xi_flat, 2 + 2 * m + i, 1);
    DT fi = slice(xi_flat, 2 + 3 * m + i, 1);
    // theta = phi + 2 pi (zeta t^2 / 2 + f t)
    DT theta = add(mul(ones, phii),
                   scale(add(scale(mul(square(t), zetai), 0.5), mul(t, fi)), 2.0 * M_PI));
    DT dtheta = scale(add(mul(t, zetai), mul(ones, fi)), 2.0 * M_PI);
    DT term = mul(cos_(theta), ai);
    DT dterm = neg(mul(mul(sin_(theta), ai), dtheta));
    carrier = first ? term : add(carrier, term);
    dcarrier = first ? dterm : add(dcarrier, dterm);
    first = false;
  }
  if (first) {
    carrier = tape.constant(Tensor::from_vec(Eigen::VectorXd::Zero(s)));
    dcarrier = carrier;
  }
  DT g = mul(env, carrier);
  DT dg = add(mul(denv, carrier), mul(env, dcarrier));
  return {g, dg};
}

TrajectorySeries sample_pulse(const PulseParams& xi, double t0, double k, int n_steps) {
  xi.validate();
  Eigen::VectorXd times(n_steps + 1);
  for (int i = 0; i <= n_steps; ++i) times[i] = t0 + i * k;
  Tape tape;
  DT flat = tape.constant(Tensor::from_vec(xi.flat()));
  auto [g, dg] = sample_pulse(tape, flat, xi.n(), times);
  TrajectorySeries s;
  s.x = 0.0;
  s.t0 = t0;
  s.k = k;
  s.value = g.val().data;
  s.deriv = dg.val().data;
  return s;
}

double bump_psi(double nu, double f_center, double r) {
  if (r <= 0.0) throw std::invalid_argument("bump_psi: r must be > 0");
  const double d = nu - f_center;
  if (std::abs(d) >= r) return 0.0;
  return std::exp(r * r / (d * d - r * r));
}

DT cost_G(Tape& tape, DT value_channel, double k, const CostConfig& cfg) {
  using namespace ad;
  const int s1 = value_channel.val().numel();
  if (s1 < 2) throw std::invalid_argument("cost_G: need at least two samples");
  const int n = s1 - 1;  // DFT over the first n samples; nu_j = j / (n k)
  const double nyquist = 0.5 / k;
  if (cfg.f_center + cfg.band_halfwidth > nyquist)
    throw std::invalid_argument("cost_G: band exceeds the resolvable frequency range");

  DT head = slice(value_channel, 0, n);
  DT spec = dft(head);
  DT power = modulus_squared(spec);
  Eigen::VectorXd w(n);
  const double dnu = 1.0 / (n * k);
  for (int j = 0; j < n; ++j) {
    const int jf = std::min(j, n - j);  // fold the Hermitian partner
    w[j] = bump_psi(jf * dnu, cfg.f_center, cfg.band_halfwidth) * dnu;
  }
  return dot(power, w);
}

ObjectiveParts objective(Tape& tape, DT xi_flat, int m, const SolutionOperator& op,
                         const Bound& bound, int chain_length, const CostConfig& cfg,
                         const Eigen::VectorXd& times) {
  using namespace ad;
  auto [g, dg] = sample_pulse(tape, xi_flat, m, times);
  DT v = g, d = dg;
  for (int i = 0; i < chain_length; ++i) {
    auto [nv, nd] = operator_forward(tape, op, bound, v, d);
    v = nv;
    d = nd;
  }
  const double k = times[1] - times[0];
  DT cost = cost_G(tape, v, k, cfg);

  // discrete L2(I) norm of the boundary trace (trapezoid)
  const int s = static_cast<int>(times.size());
  Eigen::VectorXd tw = Eigen::VectorXd::Constant(s, k);
  tw[0] = tw[s - 1] = 0.5 * k;
  DT pen = scale(dot(square(g), tw), 0.5 * cfg.penalty_alpha);

  ObjectiveParts parts;
  parts.cost = cost.val().scalar_value();
  parts.penalty = pen.val().scalar_value();
  parts.J = cfg.maximize ? sub(cost, pen) : add(cost, pen);
  return parts;
}

OcpResult optimize_pulse(const PulseParams& init, const SolutionOperator& op,
                         const OcpConfig& cfg) {
  PulseParams xi = project_bounds(init);
  xi.validate();
  const int m = xi.n();
  Eigen::VectorXd times(op.n_steps + 1);
  for (int i = 0; i <= op.n_steps; ++i) times[i] = i * op.k;

  OcpResult out;
  AdamWState astate;
  LbfgsState lstate;

  auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad, double* cost, double* pen) {
    Tape tape;
    Bound bound = bind_operator(tape, op, false);
    DT leaf = tape.leaf(Tensor::from_vec(x));
    ObjectiveParts parts =
        objective(tape, leaf, m, op, bound, cfg.chain_length, cfg.cost, times);
    // minimize L = -J (maximize) or J (minimize)
    DT L = cfg.cost.maximize ? ad::neg(parts.J) : parts.J;
    const double val = L.val().scalar_value();
    if (grad) {
      tape.backward(L);
      *grad = tape.grad(leaf.id).data;
    }
    if (cost) *cost = parts.cost;
    if (pen) *pen = parts.penalty;
    return val;
  };

  Eigen::VectorXd x = xi.flat();
  for (int it = 0; it < cfg.max_iter; ++it) {
    Eigen::VectorXd g;
    double cost = 0, pen = 0;
    const double L = eval(x, &g, &cost, &pen);
    if (!std::isfinite(L)) {
      std::string dump = "optimize_pulse: non-finite objective at iterate [";
      for (int i = 0; i < x.size(); ++i) dump += (i ? "," : "") + std::to_string(x[i]);
      throw std::runtime_error(dump + "]");
    }

    Eigen::VectorXd xn;
    if (cfg.optimizer == OcpConfig::Opt::adamw) {
      std::vector<Tensor> params = {Tensor::from_vec(x)};
      std::vector<Tensor> grads = {Tensor::from_vec(g)};
      std::vector<Tensor*> ptrs = {&params[0]};
      adamw_step(astate, cfg.adamw, ptrs, grads);
      xn = params[0].data;
    } else {
      try {
        xn = lbfgs_step(lstate, cfg.lbfgs, x, g, L,
                        [&](const Eigen::VectorXd& xt) { return eval(xt, nullptr, nullptr, nullptr); });
      } catch (const LineSearchFailure&) {
        out.stop_reason = "line search failed";
        out.trace.push_back({it, cost, pen, cfg.cost.maximize ? cost - pen : cost + pen, 0.0, x});
        break;
      }
    }
    PulseParams proj = project_bounds(PulseParams::from_flat(xn, xi.bounds));
    xn = proj.flat();

    const double step_norm = (xn - x).norm();
    out.trace.push_back(
        {it, cost, pen, cfg.cost.maximize ? cost - pen : cost + pen, step_norm, xn});
    x = xn;
    if (step_norm <= cfg.step_tol) {
      out.stop_reason = "step below tolerance";
      break;
    }
  }
  if (out.stop_reason.empty()) out.stop_reason = "max iterations";
  out.params = PulseParams::from_flat(x, xi.bounds);
  return out;
}

}  // namespace thz
