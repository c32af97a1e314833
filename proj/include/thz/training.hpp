// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>

#include "thz/neural.hpp"

namespace thz {

enum class LossKind { l_c1, l_dt, l2 };

/// Trajectory losses over the slab grid. l2 averages squared value-channel
/// differences, l_dt adds the derivative channel, l_c1 integrates the squared
/// Hermite-reconstructed difference in time (analytic per-slab integrals)
/// divided by the horizon.
ad::DT trajectory_loss(ad::Tape& tape, LossKind kind, ad::DT pred_value, ad::DT pred_deriv,
                       ad::DT target_value, ad::DT target_deriv, double k);

double loss(LossKind kind, const TrajectorySeries& pred, const TrajectorySeries& target);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  std::vector<ad::Tensor> m, v;
  long step = 0;
};

/// Decoupled weight decay applied multiplicatively before the bias-corrected
/// moment update.
void adamw_step(AdamWState& state, const AdamWConfig& cfg, std::vector<ad::Tensor*> params,
                const std::vector<ad::Tensor>& grads);

struct LbfgsConfig {
  int history = 10;
  double c1 = 1e-4;  // Armijo constant
  int max_halvings = 20;
  double init_step = 1.0;
};

struct LbfgsState {
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;  // (s, y)
  Eigen::VectorXd prev_x, prev_g;
  bool have_prev = false;
  void reset() {
    pairs.clear();
    have_prev = false;
  }
};

struct LineSearchFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Two-loop recursion with backtracking Armijo line search; curvature pairs
/// with s.y <= 1e-10 are skipped. A failed line search rejects the step,
/// clears the history and throws LineSearchFailure.
Eigen::VectorXd lbfgs_step(LbfgsState& state, const LbfgsConfig& cfg, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& grad, double fx,
                           const std::function<double(const Eigen::VectorXd&)>& value_at);

struct TrainConfig {
  int epochs = 200;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::l_dt;
  enum class Opt { adamw, lbfgs } optimizer = Opt::adamw;
  AdamWConfig adamw;
  LbfgsConfig lbfgs;
  int workers = 1;
  double train_fraction = 0.6;  // leading pairs train, the rest validate
  bool shared_shard = false;    // every worker sees the full training set
};

struct EpochRecord {
  int epoch;
  double train_loss;
  double val_loss;
  double wall_seconds;
};

struct TrainResult {
  std::vector<EpochRecord> curve;
  double best_val = 0.0;
  double wall_seconds = 0.0;
};

using TrainPair = std::pair<TrajectorySeries, TrajectorySeries>;

/// Full-batch training with per-epoch parameter averaging across worker
/// threads. Deterministic for a fixed seed and one worker.
TrainResult train(const TrainConfig& cfg, const std::vector<TrainPair>& data,
                  SolutionOperator& op);

/// Arithmetic mean of per-worker parameter sets, broadcast back to all.
void average_parameters(std::vector<std::vector<ad::Tensor>>& workers);

}  // namespace thz
