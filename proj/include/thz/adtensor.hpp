// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace thz::ad {

/// Dense real or complex tensor, rank <= 2 in practice. Complex data is stored
/// interleaved (re, im) in the same buffer.
struct Tensor {
  std::vector<int> shape;
  bool complex = false;
  Eigen::VectorXd data;

  Tensor() = default;
  static Tensor zeros(std::vector<int> shape, bool complex = false);
  static Tensor scalar(double v);
  static Tensor from_vec(const Eigen::VectorXd& v);
  static Tensor from_mat(const Eigen::MatrixXd& m);  // row-major [rows][cols]

  int numel() const;
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double& at(int i) { return data[i]; }
  double at(int i) const { return data[i]; }
  std::complex<double> cplx(int i) const { return {data[2 * i], data[2 * i + 1]}; }
  void set_cplx(int i, std::complex<double> z) {
    data[2 * i] = z.real();
    data[2 * i + 1] = z.imag();
  }
  double scalar_value() const;
};

class Tape;

/// Handle to a tape node; copies share the node.
struct DT {
  Tape* tape = nullptr;
  int id = -1;
  const Tensor& val() const;
};

using BackwardFn = std::function<void(Tape&, int node)>;

struct Node {
  std::string op;
  std::vector<int> inputs;
  Tensor value;
  Tensor grad;  // same shape as value; lazily allocated
  bool grad_alloc = false;
  bool requires_grad = true;
  BackwardFn backward;
};

/// Append-only operation log; consumed once by backward().
class Tape {
 public:
  DT leaf(Tensor v, bool requires_grad = true);
  DT constant(Tensor v) { return leaf(std::move(v), false); }

  int size() const { return static_cast<int>(nodes_.size()); }
  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  const Tensor& value(int id) const { return nodes_[id].value; }
  Tensor& grad(int id);

  /// Reverse sweep from a scalar output; every node visited exactly once.
  void backward(const DT& out);

  int push(std::string op, std::vector<int> inputs, Tensor value, BackwardFn bwd);

 private:
  std::vector<Node> nodes_;
  bool used_ = false;
};

// ---- primitive set ----
DT add(DT a, DT b);
DT sub(DT a, DT b);
DT mul(DT a, DT b);      // elementwise; scalar broadcasts
DT div(DT a, DT b);      // elementwise; scalar divisor broadcasts
DT neg(DT a);
DT scale(DT a, double c);
DT shift(DT a, double c);
DT matmul(DT a, DT b);   // [m x k] * [k x n]
DT sum(DT a);
DT mean(DT a);
DT dot(DT a, const Eigen::VectorXd& w);  // weighted sum against a constant
DT tanh_(DT a);
DT logistic(DT a);
DT sin_(DT a);
DT cos_(DT a);
DT exp_(DT a);
DT log_(DT a);
DT square(DT a);
DT sqrt_(DT a);
/// x^p with tensor x >= 0 and scalar exponent p; at x = 0 both partials are
/// taken as their p > 1 limits (0).
DT pow_tp(DT x, DT p);
DT slice(DT a, int offset, int len);           // flat slice on rank-1
DT concat(const std::vector<DT>& parts);       // rank-1 concatenation
DT get_col(DT a, int j);                       // [m x n] -> [m]
DT stack_cols(const std::vector<DT>& cols);    // k vectors [m] -> [m x k]
DT get_row(DT a, int i);                       // [m x n] -> [n]

// complex support (real-pair gradient convention)
DT to_complex(DT re);                          // real -> complex with zero imag
DT real_part(DT z);
DT imag_part(DT z);
DT conj_(DT z);
DT cmul(DT a, DT b);                           // elementwise complex multiply
DT modulus_squared(DT z);                      // complex -> real |z|^2

/// Unnormalized discrete Fourier pair: dft uses exp(-2 pi i j k / s), idft uses
/// exp(+2 pi i j k / s); idft(dft(x)) = s * x. idft_normalized divides by s.
DT dft(DT x);             // real or complex input -> complex
DT idft(DT x);            // complex -> complex, unnormalized
DT idft_normalized(DT x); // complex -> complex

/// Spectral mixing of Fourier modes, Eq.-style bilinear contraction:
/// Y[m,o] = sum_i P[m,o,i] X[m,i] for m < n_modes (P complex [n_modes x out x in],
/// X complex [s x in]); remaining modes are zero.
DT mode_mix(DT P, DT X, int n_modes, int out_ch);
/// Fills modes s-m with the conjugate of mode m (m = 1..n_modes-1) so that a
/// conj-symmetric truncated spectrum inverts to a real signal.
DT mirror_spectrum(DT Y, int n_modes);

// 2D conveniences for sequence networks
DT stack_rows(const std::vector<DT>& rows);    // k vectors [n] -> [k x n]
DT add_bias(DT a, DT b);                       // [m x n] + broadcast [n]
DT pad_rows(DT a, int new_rows);               // zero rows appended
DT crop_rows(DT a, int new_rows);
DT dft_cols(DT a);                             // per-column dft of [s x c] real/complex
/// normalized per-column inverse transform returning the real part; the largest
/// dropped imaginary magnitude is written to *imag_residue when given.
DT idftn_cols_real(DT a, double* imag_residue = nullptr);

// raw fft helpers (used by oracles and diagnostics as well)
void fft_inplace(std::vector<std::complex<double>>& v, bool inverse);
std::vector<std::complex<double>> dft_direct(const std::vector<std::complex<double>>& v,
                                             bool inverse);

/// Central-difference check of d(scalar builder)/d(leaves); returns the max
/// relative error over all coordinates (random probes above 1000 coordinates).
double gradcheck(const std::function<DT(Tape&, const std::vector<DT>&)>& build,
                 const std::vector<Tensor>& leaves, double h = 1e-6);

}  // namespace thz::ad
