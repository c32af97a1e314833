// SPDX-License-Identifier: Apache-2.0
#include "thz/training.hpp"

#include <chrono>
#include <cmath>
#include <thread>

namespace thz {

using ad::DT;
using ad::Tape;
using ad::Tensor;

namespace {

// Gram matrix of the reference Hermite basis, int_0^1 xi_i xi_j dt
constexpr double H00 = 13.0 / 35.0, H01 = 11.0 / 210.0, H02 = 9.0 / 70.0, H03 = -13.0 / 420.0;
constexpr double H11 = 1.0 / 105.0, H12 = 13.0 / 420.0, H13 = -1.0 / 140.0;
constexpr double H22 = 13.0 / 35.0, H23 = -11.0 / 210.0, H33 = 1.0 / 105.0;

DT quadform_c1(Tape& tape, DT dv, DT dd_scaled, int n_slabs) {
  using namespace ad;
  DT c0 = slice(dv, 0, n_slabs), c1 = slice(dv, 1, n_slabs);
  DT d0 = slice(dd_scaled, 0, n_slabs), d1 = slice(dd_scaled, 1, n_slabs);
  DT acc = scale(sum(mul(c0, c0)), H00);
  acc = add(acc, scale(sum(mul(c0, d0)), 2 * H01));
  acc = add(acc, scale(sum(mul(c0, c1)), 2 * H02));
  acc = add(acc, scale(sum(mul(c0, d1)), 2 * H03));
  acc = add(acc, scale(sum(mul(d0, d0)), H11));
  acc = add(acc, scale(sum(mul(d0, c1)), 2 * H12));
  acc = add(acc, scale(sum(mul(d0, d1)), 2 * H13));
  acc = add(acc, scale(sum(mul(c1, c1)), H22));
  acc = add(acc, scale(sum(mul(c1, d1)), 2 * H23));
  acc = add(acc, scale(sum(mul(d1, d1)), H33));
  return acc;
}

}  // namespace

DT trajectory_loss(Tape& tape, LossKind kind, DT pv, DT pd, DT tv, DT td, double k) {
  using namespace ad;
  DT dv = sub(pv, tv);
  if (kind == LossKind::l2) return mean(square(dv));
  DT dd = sub(pd, td);
  if (kind == LossKind::l_dt) return add(mean(square(dv)), mean(square(dd)));
  const int n = dv.val().numel() - 1;
  // (1/|I|) * sum_slabs k * (c^T H c) with the derivative coefficients k-scaled
  DT q = quadform_c1(tape, dv, scale(dd, k), n);
  return scale(q, 1.0 / n);
}

double loss(LossKind kind, const TrajectorySeries& pred, const TrajectorySeries& target) {
  Tape tape;
  DT pv = tape.constant(Tensor::from_vec(pred.value));
  DT pd = tape.constant(Tensor::from_vec(pred.deriv));
  DT tv = tape.constant(Tensor::from_vec(target.value));
  DT td = tape.constant(Tensor::from_vec(target.deriv));
  return trajectory_loss(tape, kind, pv, pd, tv, td, pred.k).val().scalar_value();
}

void adamw_step(AdamWState& st, const AdamWConfig& cfg, std::vector<ad::Tensor*> params,
                const std::vector<ad::Tensor>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adamw_step: parameter/gradient count mismatch");
  if (st.m.empty()) {
    for (const Tensor* p : params) {
      st.m.push_back(Tensor::zeros(p->shape, p->complex));
      st.v.push_back(Tensor::zeros(p->shape, p->complex));
    }
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (p.data.size() != grads[i].data.size())
      throw std::invalid_argument("adamw_step: gradient shape mismatch");
    if (cfg.weight_decay != 0.0) p.data *= (1.0 - cfg.lr * cfg.weight_decay);
    auto& m = st.m[i].data;
    auto& v = st.v[i].data;
    const auto& g = grads[i].data;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    for (int j = 0; j < p.data.size(); ++j) {
      const double mh = m[j] / bc1, vh = v[j] / bc2;
      p.data[j] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

Eigen::VectorXd lbfgs_step(LbfgsState& st, const LbfgsConfig& cfg, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& g, double fx,
                           const std::function<double(const Eigen::VectorXd&)>& value_at) {
  if (st.have_prev) {
    Eigen::VectorXd s = x - st.prev_x;
    Eigen::VectorXd y = g - st.prev_g;
    const double sy = s.dot(y);
    if (sy > 1e-10) {
      st.pairs.push_back({s, y});
      while (static_cast<int>(st.pairs.size()) > cfg.history) st.pairs.pop_front();
    }
  }

  // two-loop recursion
  Eigen::VectorXd q = g;
  std::vector<double> alpha(st.pairs.size());
  for (int i = static_cast<int>(st.pairs.size()) - 1; i >= 0; --i) {
    const auto& [s, y] = st.pairs[i];
    alpha[i] = s.dot(q) / s.dot(y);
    q -= alpha[i] * y;
  }
  if (!st.pairs.empty()) {
    const auto& [s, y] = st.pairs.back();
    q *= s.dot(y) / y.dot(y);
  }
  for (size_t i = 0; i < st.pairs.size(); ++i) {
    const auto& [s, y] = st.pairs[i];
    const double beta = y.dot(q) / s.dot(y);
    q += (alpha[i] - beta) * s;
  }
  Eigen::VectorXd dir = -q;

  const double slope = g.dot(dir);
  double t = cfg.init_step;
  for (int h = 0; h <= cfg.max_halvings; ++h) {
    Eigen::VectorXd xt = x + t * dir;
    const double ft = value_at(xt);
    if (std::isfinite(ft) && ft <= fx + cfg.c1 * t * slope) {
      st.prev_x = x;
      st.prev_g = g;
      st.have_prev = true;
      return xt;
    }
    t *= 0.5;
  }
  st.reset();
  throw LineSearchFailure("lbfgs_step: Armijo line search failed after " +
                          std::to_string(cfg.max_halvings) + " halvings; history cleared");
}

void average_parameters(std::vector<std::vector<ad::Tensor>>& workers) {
  if (workers.empty()) return;
  const size_t np = workers[0].size();
  for (const auto& w : workers) {
    if (w.size() != np) throw std::invalid_argument("average_parameters: parameter count mismatch");
    for (size_t i = 0; i < np; ++i)
      if (w[i].shape != workers[0][i].shape || w[i].complex != workers[0][i].complex)
        throw std::invalid_argument("average_parameters: shape mismatch");
  }
  const double inv = 1.0 / static_cast<double>(workers.size());
  for (size_t i = 0; i < np; ++i) {
    Eigen::VectorXd acc = workers[0][i].data;
    for (size_t w = 1; w < workers.size(); ++w) acc += workers[w][i].data;
    acc *= inv;
    for (auto& w : workers) w[i].data = acc;
  }
}

namespace {

struct ForwardLoss {
  double value = 0.0;
  std::vector<Tensor> grads;
};

ForwardLoss batch_loss(const SolutionOperator& op, LossKind kind,
                       const std::vector<const TrainPair*>& pairs, bool want_grad) {
  ForwardLoss out;
  for (const TrainPair* pr : pairs) {
    Tape tape;
    Bound bound = bind_operator(tape, op, want_grad);
    DT v = tape.constant(Tensor::from_vec(pr->first.value));
    DT d = tape.constant(Tensor::from_vec(pr->first.deriv));
    auto [ov, od] = operator_forward(tape, op, bound, v, d);
    DT tv = tape.constant(Tensor::from_vec(pr->second.value));
    DT td = tape.constant(Tensor::from_vec(pr->second.deriv));
    DT l = trajectory_loss(tape, kind, ov, od, tv, td, pr->first.k);
    out.value += l.val().scalar_value();
    if (want_grad) {
      tape.backward(l);
      if (out.grads.empty())
        for (const DT& leaf : bound.leaves) out.grads.push_back(tape.grad(leaf.id));
      else
        for (size_t i = 0; i < bound.leaves.size(); ++i)
          out.grads[i].data += tape.grad(bound.leaves[i].id).data;
    }
  }
  const double inv = pairs.empty() ? 0.0 : 1.0 / static_cast<double>(pairs.size());
  out.value *= inv;
  for (Tensor& g : out.grads) g.data *= inv;
  return out;
}

std::vector<Tensor> copy_params(const SolutionOperator& op) {
  std::vector<Tensor> v;
  for (const Tensor* p : op.param_ptrs()) v.push_back(*p);
  return v;
}

void load_params(SolutionOperator& op, const std::vector<Tensor>& v) {
  auto ptrs = op.param_ptrs();
  for (size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = v[i];
}

Eigen::VectorXd flatten(const std::vector<Tensor>& v) {
  int n = 0;
  for (const Tensor& t : v) n += static_cast<int>(t.data.size());
  Eigen::VectorXd x(n);
  int at = 0;
  for (const Tensor& t : v) {
    x.segment(at, t.data.size()) = t.data;
    at += static_cast<int>(t.data.size());
  }
  return x;
}

void unflatten(const Eigen::VectorXd& x, std::vector<Tensor>& v) {
  int at = 0;
  for (Tensor& t : v) {
    t.data = x.segment(at, t.data.size());
    at += static_cast<int>(t.data.size());
  }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<TrainPair>& data,
                  SolutionOperator& op) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.workers < 1) throw std::invalid_argument("train: need at least one worker");
  const int n_train = std::max(1, static_cast<int>(std::lround(cfg.train_fraction * data.size())));
  std::vector<const TrainPair*> train_pairs, val_pairs;
  for (size_t i = 0; i < data.size(); ++i)
    ((static_cast<int>(i) < n_train) ? train_pairs : val_pairs).push_back(&data[i]);
  if (val_pairs.empty()) val_pairs = train_pairs;

  // per-worker shards (contiguous), or the full set when shared
  std::vector<std::vector<const TrainPair*>> shards(cfg.workers);
  if (cfg.shared_shard) {
    for (auto& s : shards) s = train_pairs;
  } else {
    for (size_t i = 0; i < train_pairs.size(); ++i)
      shards[i % cfg.workers].push_back(train_pairs[i]);
  }

  std::vector<std::vector<Tensor>> replicas(cfg.workers, copy_params(op));
  std::vector<AdamWState> adamw_states(cfg.workers);
  std::vector<LbfgsState> lbfgs_states(cfg.workers);

  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  const auto t_start = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double train_loss_sum = 0.0;
    auto run_worker = [&](int w) {
      SolutionOperator local = op;
      load_params(local, replicas[w]);
      ForwardLoss fl = batch_loss(local, cfg.loss, shards[w], true);
      if (!std::isfinite(fl.value))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      if (cfg.optimizer == TrainConfig::Opt::adamw) {
        std::vector<Tensor*> ptrs = local.param_ptrs();
        adamw_step(adamw_states[w], cfg.adamw, ptrs, fl.grads);
      } else {
        std::vector<Tensor> params = copy_params(local);
        Eigen::VectorXd x = flatten(params);
        Eigen::VectorXd g = flatten(fl.grads);
        auto value_at = [&](const Eigen::VectorXd& xt) {
          std::vector<Tensor> tp = params;
          unflatten(xt, tp);
          SolutionOperator probe = local;
          load_params(probe, tp);
          return batch_loss(probe, cfg.loss, shards[w], false).value;
        };
        try {
          Eigen::VectorXd xn = lbfgs_step(lbfgs_states[w], cfg.lbfgs, x, g, fl.value, value_at);
          unflatten(xn, params);
          load_params(local, params);
        } catch (const LineSearchFailure&) {
          // keep the current iterate; history was cleared
        }
      }
      replicas[w] = copy_params(local);
      return fl.value;
    };

    if (cfg.workers == 1) {
      train_loss_sum = run_worker(0);
    } else {
      std::vector<std::thread> threads;
      std::vector<double> losses(cfg.workers, 0.0);
      std::exception_ptr err;
      for (int w = 0; w < cfg.workers; ++w)
        threads.emplace_back([&, w] {
          try {
            losses[w] = run_worker(w);
          } catch (...) {
            err = std::current_exception();
          }
        });
      for (auto& t : threads) t.join();
      if (err) std::rethrow_exception(err);
      for (double l : losses) train_loss_sum += l;
      train_loss_sum /= cfg.workers;
      average_parameters(replicas);
    }

    load_params(op, replicas[0]);
    const double val = batch_loss(op, cfg.loss, val_pairs, false).value;
    if (!std::isfinite(val))
      throw std::runtime_error("train: non-finite validation loss at epoch " +
                               std::to_string(epoch));
    result.best_val = std::min(result.best_val, val);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.curve.push_back({epoch, train_loss_sum, val, wall});
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace thz
