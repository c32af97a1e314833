// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "thz/adtensor.hpp"
#include "thz/trajectory.hpp"

namespace thz {

enum class Activation { tanh, identity };

/// Fourier neural operator over 1D sequences. The lifting is a plain linear
/// map, each Fourier layer combines a local affine path with a truncated
/// spectral convolution (conjugate-symmetric by construction, only nonnegative
/// modes are stored), and an affine map projects onto the output channels.
struct FnoConfig {
  int layers = 4;
  int width = 8;
  int n_modes = 8;
  int d_in = 3;   // value, derivative, normalized time coordinate
  int d_out = 2;  // value, derivative
  double pad_fraction = 0.25;
  Activation activation = Activation::tanh;

  static int default_n_modes(int samples) { return std::min(16, samples / 4); }
};

struct FnoParams {
  ad::Tensor lift;                     // [d_in x width]
  std::vector<ad::Tensor> W, b;        // per layer [width x width], [width]
  std::vector<ad::Tensor> P;           // per layer complex [n_modes x width x width]
  ad::Tensor proj;                     // [width x d_out]
  ad::Tensor proj_b;                   // [d_out]
};

std::int64_t fno_param_count(const FnoConfig& cfg);
FnoParams fno_init(const FnoConfig& cfg, std::uint64_t seed);

struct GruConfig {
  int layers = 1;
  int hidden = 8;
  int d_in = 2;
  int d_out = 2;
  static GruConfig make(int layers, int hidden, int d_in = 2, int d_out = 2) {
    return {layers, hidden, d_in, d_out};
  }
};

/// Gated recurrent unit stack: z and r gates use the logistic function, the
/// candidate state uses tanh; a final linear map reads the hidden sequence out.
struct GruParams {
  struct Layer {
    ad::Tensor Wz, Wr, Wh;  // [hidden x input]
    ad::Tensor Uz, Ur, Uh;  // [hidden x hidden]
    ad::Tensor bz, br, bh;  // [hidden]
  };
  std::vector<Layer> layers;
  ad::Tensor proj;    // [hidden x d_out]
  ad::Tensor proj_b;  // [d_out]
};

std::int64_t gru_param_count(const GruConfig& cfg);
GruParams gru_init(const GruConfig& cfg, std::uint64_t seed);

/// Parameter leaves registered on one tape, in checkpoint order.
struct Bound {
  std::vector<ad::DT> leaves;
};

Bound bind_fno(ad::Tape& tape, const FnoParams& p, bool trainable);
Bound bind_gru(ad::Tape& tape, const GruParams& p, bool trainable);

struct FnoForward {
  ad::DT out;            // [s x d_out]
  double imag_residue;   // largest imaginary part dropped by the inverse FFT
};
FnoForward fno_forward(ad::Tape& tape, const FnoConfig& cfg, const Bound& bound, ad::DT v);
ad::DT gru_forward(ad::Tape& tape, const GruConfig& cfg, const Bound& bound, ad::DT seq);

/// Learned map sending the (value, derivative) trajectory at one period
/// interface to the trajectory one period downstream.
struct SolutionOperator {
  enum class Kind { fno, gru };
  Kind kind = Kind::fno;
  FnoConfig fno_cfg;
  FnoParams fno_params;
  GruConfig gru_cfg;
  GruParams gru_params;
  int n_steps = 0;     // grid: N+1 samples
  double k = 0.0;
  double period = 0.0;  // spatial advance per application

  std::vector<ad::Tensor*> param_ptrs();
  std::vector<const ad::Tensor*> param_ptrs() const;
};

Bound bind_operator(ad::Tape& tape, const SolutionOperator& op, bool trainable);

/// Differentiable application on a tape; input and output are the two channel
/// vectors of length N+1.
std::pair<ad::DT, ad::DT> operator_forward(ad::Tape& tape, const SolutionOperator& op,
                                           const Bound& bound, ad::DT value, ad::DT deriv);

TrajectorySeries operator_apply(const SolutionOperator& op, const TrajectorySeries& in);
TrajectorySeries operator_power(const SolutionOperator& op, int count,
                                const TrajectorySeries& boundary);

/// Tensor-product space-time evaluator between interface trajectories:
/// Hermite in time, hat functions in space.
struct SpaceTimeField {
  std::vector<TrajectorySeries> interfaces;  // ascending x
  std::pair<double, double> eval(double x, double t) const;  // (value, dt value)
};
SpaceTimeField spacetime_extend(std::vector<TrajectorySeries> interfaces);

void checkpoint_write(const std::string& path, const SolutionOperator& op,
                      const std::map<std::string, std::string>& meta);
SolutionOperator checkpoint_read(const std::string& path,
                                 std::map<std::string, std::string>* meta = nullptr);

}  // namespace thz
