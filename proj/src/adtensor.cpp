// SPDX-License-Identifier: Apache-2.0
#include "thz/adtensor.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace thz::ad {

namespace {

std::string shape_str(const Tensor& t) {
  std::string s = t.complex ? "complex[" : "real[";
  for (size_t i = 0; i < t.shape.size(); ++i) s += (i ? "x" : "") + std::to_string(t.shape[i]);
  return s + "]";
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch between " + shape_str(a) +
                              " and " + shape_str(b));
}

bool is_scalar(const Tensor& t) { return !t.complex && t.numel() == 1; }

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool complex) {
  Tensor t;
  t.shape = std::move(shape);
  t.complex = complex;
  t.data = Eigen::VectorXd::Zero(t.numel() * (complex ? 2 : 1));
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t = zeros({});
  t.data[0] = v;
  return t;
}

Tensor Tensor::from_vec(const Eigen::VectorXd& v) {
  Tensor t;
  t.shape = {static_cast<int>(v.size())};
  t.data = v;
  return t;
}

Tensor Tensor::from_mat(const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
  t.data.resize(m.size());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) t.data[i * m.cols() + j] = m(i, j);
  return t;
}

int Tensor::numel() const {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

double Tensor::scalar_value() const {
  if (complex || numel() != 1) throw std::logic_error("Tensor::scalar_value: not a real scalar");
  return data[0];
}

const Tensor& DT::val() const { return tape->value(id); }

DT Tape::leaf(Tensor v, bool requires_grad) {
  nodes_.push_back(Node{"leaf", {}, std::move(v), {}, false, requires_grad, nullptr});
  return DT{this, static_cast<int>(nodes_.size() - 1)};
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value.shape, n.value.complex);
    n.grad_alloc = true;
  }
  return n.grad;
}

int Tape::push(std::string op, std::vector<int> inputs, Tensor value, BackwardFn bwd) {
  bool rg = false;
  for (int i : inputs) rg = rg || nodes_[i].requires_grad;
  nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(value), {}, false, rg,
                        std::move(bwd)});
  return static_cast<int>(nodes_.size() - 1);
}

void Tape::backward(const DT& out) {
  if (used_) throw std::logic_error("Tape::backward: tape already consumed");
  used_ = true;
  const Node& o = nodes_[out.id];
  if (o.value.complex || o.value.numel() != 1)
    throw std::invalid_argument("Tape::backward: output must be a real scalar");
  grad(out.id).data[0] = 1.0;
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_alloc || !n.requires_grad || !n.backward) continue;
    n.backward(*this, id);
  }
}

namespace {

DT unary(DT a, const char* op, const std::function<double(double)>& f,
         const std::function<double(double, double)>& dfdx /* (x, y) */) {
  if (a.val().complex) throw std::invalid_argument(std::string(op) + ": real input required");
  Tensor out = a.val();
  for (int i = 0; i < out.data.size(); ++i) out.data[i] = f(out.data[i]);
  int id = a.tape->push(op, {a.id}, std::move(out), [dfdx](Tape& t, int self) {
    const Node& n = t.node(self);
    const Tensor& x = t.value(n.inputs[0]);
    Tensor& g = t.grad(n.inputs[0]);
    for (int i = 0; i < x.data.size(); ++i)
      g.data[i] += n.grad.data[i] * dfdx(x.data[i], n.value.data[i]);
  });
  return DT{a.tape, id};
}

}  // namespace

DT add(DT a, DT b) {
  const Tensor &A = a.val(), &B = b.val();
  if (A.shape != B.shape || A.complex != B.complex) shape_error("add", A, B);
  Tensor out = A;
  out.data += B.data;
  int id = a.tape->push("add", {a.id, b.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.grad(n.inputs[0]).data += n.grad.data;
    t.grad(n.inputs[1]).data += n.grad.data;
  });
  return DT{a.tape, id};
}

DT sub(DT a, DT b) {
  const Tensor &A = a.val(), &B = b.val();
  if (A.shape != B.shape || A.complex != B.complex) shape_error("sub", A, B);
  Tensor out = A;
  out.data -= B.data;
  int id = a.tape->push("sub", {a.id, b.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.grad(n.inputs[0]).data += n.grad.data;
    t.grad(n.inputs[1]).data -= n.grad.data;
  });
  return DT{a.tape, id};
}

DT mul(DT a, DT b) {
  const Tensor &A = a.val(), &B = b.val();
  if (A.complex || B.complex) throw std::invalid_argument("mul: use cmul for complex tensors");
  if (A.shape != B.shape && !is_scalar(A) && !is_scalar(B)) shape_error("mul", A, B);
  const bool sa = is_scalar(A), sb = is_scalar(B);
  Tensor out = sa ? B : A;
  if (sa)
    out.data *= A.data[0];
  else if (sb)
    out.data *= B.data[0];
  else
    out.data = A.data.cwiseProduct(B.data);
  int id = a.tape->push("mul", {a.id, b.id}, std::move(out), [sa, sb](Tape& t, int self) {
    const Node& n = t.node(self);
    const Tensor &A = t.value(n.inputs[0]), &B = t.value(n.inputs[1]);
    Tensor &ga = t.grad(n.inputs[0]), &gb = t.grad(n.inputs[1]);
    if (sa) {
      ga.data[0] += n.grad.data.dot(B.data);
      gb.data += n.grad.data * A.data[0];
    } else if (sb) {
      ga.data += n.grad.data * B.data[0];
      gb.data[0] += n.grad.data.dot(A.data);
    } else {
      ga.data += n.grad.data.cwiseProduct(B.data);
      gb.data += n.grad.data.cwiseProduct(A.data);
    }
  });
  return DT{a.tape, id};
}

DT div(DT a, DT b) {
  const Tensor &A = a.val(), &B = b.val();
  if (A.complex || B.complex) throw std::invalid_argument("div: real tensors only");
  if (A.shape != B.shape && !is_scalar(B)) shape_error("div", A, B);
  const bool sb = is_scalar(B);
  Tensor out = A;
  if (sb)
    out.data /= B.data[0];
  else
    out.data = A.data.cwiseQuotient(B.data);
  int id = a.tape->push("div", {a.id, b.id}, std::move(out), [sb](Tape& t, int self) {
    const Node& n = t.node(self);
    const Tensor &A = t.value(n.inputs[0]), &B = t.value(n.inputs[1]);
    Tensor &ga = t.grad(n.inputs[0]), &gb = t.grad(n.inputs[1]);
    if (sb) {
      const double inv = 1.0 / B.data[0];
      ga.data += n.grad.data * inv;
      gb.data[0] -= inv * inv * n.grad.data.dot(A.data);
    } else {
      ga.data += n.grad.data.cwiseQuotient(B.data);
      gb.data -= n.grad.data.cwiseProduct(A.data).cwiseQuotient(B.data.cwiseProduct(B.data));
    }
  });
  return DT{a.tape, id};
}

DT neg(DT a) { return scale(a, -1.0); }

DT scale(DT a, double c) {
  Tensor out = a.val();
  out.data *= c;
  int id = a.tape->push("scale", {a.id}, std::move(out), [c](Tape& t, int self) {
    const Node& n = t.node(self);
    t.grad(n.inputs[0]).data += c * n.grad.data;
  });
  return DT{a.tape, id};
}

DT shift(DT a, double c) {
  if (a.val().complex) throw std::invalid_argument("shift: real input required");
  Tensor out = a.val();
  out.data.array() += c;
  int id = a.tape->push("shift", {a.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.grad(n.inputs[0]).data += n.grad.data;
  });
  return DT{a.tape, id};
}

DT matmul(DT a, DT b) {
  const Tensor &A = a.val(), &B = b.val();
  if (A.complex || B.complex) throw std::invalid_argument("matmul: real tensors only");
  const int m = A.rows(), k = A.cols();
  const int k2 = B.rows(), n = B.cols();
  if (k != k2) shape_error("matmul", A, B);
  Eigen::Map<const RowMat> MA(A.data.data(), m, k), MB(B.data.data(), k, n);
  Tensor out = Tensor::zeros(B.shape.size() < 2 ? std::vector<int>{m} : std::vector<int>{m, n});
  Eigen::Map<RowMat> MO(out.data.data(), m, n);
  MO = MA * MB;
  int id = a.tape->push("matmul", {a.id, b.id}, std::move(out), [m, k, n](Tape& t, int self) {
    const Node& nd = t.node(self);
    const Tensor &A = t.value(nd.inputs[0]), &B = t.value(nd.inputs[1]);
    Eigen::Map<const RowMat> MA(A.data.data(), m, k), MB(B.data.data(), k, n),
        MG(nd.grad.data.data(), m, n);
    Eigen::Map<RowMat> GA(t.grad(nd.inputs[0]).data.data(), m, k);
    GA += MG * MB.transpose();
    Eigen::Map<RowMat> GB(t.grad(nd.inputs[1]).data.data(), k, n);
    GB += MA.transpose() * MG;
  });
  return DT{a.tape, id};
}

DT sum(DT a) {
  if (a.val().complex) throw std::invalid_argument("sum: real input required");
  Tensor out = Tensor::scalar(a.val().data.sum());
  int id = a.tape->push("sum", {a.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.grad(n.inputs[0]).data.array() += n.grad.data[0];
  });
  return DT{a.tape, id};
}

DT mean(DT a) { return scale(sum(a), 1.0 / a.val().numel()); }

DT dot(DT a, const Eigen::VectorXd& w) {
  const Tensor& A = a.val();
  if (A.complex || A.data.size() != w.size())
    throw std::invalid_argument("dot: real tensor matching weight length required");
  Tensor out = Tensor::scalar(A.data.dot(w));
  int id = a.tape->push("dot", {a.id}, std::move(out), [w](Tape& t, int self) {
    const Node& n = t.node(self);
    t.grad(n.inputs[0]).data += n.grad.data[0] * w;
  });
  return DT{a.tape, id};
}

DT tanh_(DT a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

DT logistic(DT a) {
  return unary(a, "logistic", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

DT sin_(DT a) {
  return unary(a, "sin", [](double x) { return std::sin(x); },
               [](double x, double) { return std::cos(x); });
}

DT cos_(DT a) {
  return unary(a, "cos", [](double x) { return std::cos(x); },
               [](double x, double) { return -std::sin(x); });
}

DT exp_(DT a) {
  return unary(a, "exp", [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

DT log_(DT a) {
  return unary(a, "log", [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

DT square(DT a) {
  return unary(a, "square", [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

DT sqrt_(DT a) {
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

DT pow_tp(DT x, DT p) {
  const Tensor &X = x.val(), &P = p.val();
  if (X.complex || !is_scalar(P)) throw std::invalid_argument("pow_tp: real x, scalar p");
  const double pv = P.data[0];
  Tensor out = X;
  for (int i = 0; i < out.data.size(); ++i) {
    const double xv = X.data[i];
    if (xv < 0.0) throw std::domain_error("pow_tp: negative base");
    out.data[i] = (xv == 0.0) ? 0.0 : std::pow(xv, pv);
  }
  int id = x.tape->push("pow_tp", {x.id, p.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    const Tensor& X = t.value(n.inputs[0]);
    const double pv = t.value(n.inputs[1]).data[0];
    Tensor &gx = t.grad(n.inputs[0]), &gp = t.grad(n.inputs[1]);
    for (int i = 0; i < X.data.size(); ++i) {
      const double xv = X.data[i], y = n.value.data[i], g = n.grad.data[i];
      if (xv > 0.0) {
        gx.data[i] += g * pv * std::pow(xv, pv - 1.0);
        gp.data[0] += g * y * std::log(xv);
      }
    }
  });
  return DT{x.tape, id};
}

DT slice(DT a, int offset, int len) {
  const Tensor& A = a.val();
  if (A.complex || A.shape.size() != 1) throw std::invalid_argument("slice: rank-1 real input");
  if (offset < 0 || offset + len > A.shape[0]) throw std::out_of_range("slice: range");
  Tensor out = Tensor::zeros({len});
  out.data = A.data.segment(offset, len);
  int id = a.tape->push("slice", {a.id}, std::move(out), [offset, len](Tape& t, int self) {
    const Node& n = t.node(self);
    t.grad(n.inputs[0]).data.segment(offset, len) += n.grad.data;
  });
  return DT{a.tape, id};
}

DT concat(const std::vector<DT>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  int total = 0;
  std::vector<int> ids;
  for (const DT& p : parts) {
    if (p.val().complex || p.val().shape.size() != 1)
      throw std::invalid_argument("concat: rank-1 real inputs");
    total += p.val().shape[0];
    ids.push_back(p.id);
  }
  Tensor out = Tensor::zeros({total});
  int at = 0;
  for (const DT& p : parts) {
    out.data.segment(at, p.val().shape[0]) = p.val().data;
    at += p.val().shape[0];
  }
  int id = parts[0].tape->push("concat", ids, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    int at = 0;
    for (int in : n.inputs) {
      const int len = t.value(in).shape[0];
      t.grad(in).data += n.grad.data.segment(at, len);
      at += len;
    }
  });
  return DT{parts[0].tape, id};
}

DT get_col(DT a, int j) {
  const Tensor& A = a.val();
  if (A.complex || A.shape.size() != 2) throw std::invalid_argument("get_col: rank-2 real input");
  const int m = A.shape[0], n = A.shape[1];
  if (j < 0 || j >= n) throw std::out_of_range("get_col: column index");
  Tensor out = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) out.data[i] = A.data[i * n + j];
  int id = a.tape->push("get_col", {a.id}, std::move(out), [j, m, n](Tape& t, int self) {
    const Node& nd = t.node(self);
    Tensor& g = t.grad(nd.inputs[0]);
    for (int i = 0; i < m; ++i) g.data[i * n + j] += nd.grad.data[i];
  });
  return DT{a.tape, id};
}

DT get_row(DT a, int i) {
  const Tensor& A = a.val();
  if (A.complex || A.shape.size() != 2) throw std::invalid_argument("get_row: rank-2 real input");
  const int m = A.shape[0], n = A.shape[1];
  if (i < 0 || i >= m) throw std::out_of_range("get_row: row index");
  Tensor out = Tensor::zeros({n});
  out.data = A.data.segment(i * n, n);
  int id = a.tape->push("get_row", {a.id}, std::move(out), [i, n](Tape& t, int self) {
    const Node& nd = t.node(self);
    t.grad(nd.inputs[0]).data.segment(i * n, n) += nd.grad.data;
  });
  return DT{a.tape, id};
}

DT stack_cols(const std::vector<DT>& cols) {
  if (cols.empty()) throw std::invalid_argument("stack_cols: no inputs");
  const int m = cols[0].val().rows();
  std::vector<int> ids;
  for (const DT& c : cols) {
    if (c.val().complex || c.val().shape.size() != 1 || c.val().shape[0] != m)
      throw std::invalid_argument("stack_cols: rank-1 real inputs of equal length");
    ids.push_back(c.id);
  }
  const int n = static_cast<int>(cols.size());
  Tensor out = Tensor::zeros({m, n});
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) out.data[i * n + j] = cols[j].val().data[i];
  int id = cols[0].tape->push("stack_cols", ids, std::move(out), [m, n](Tape& t, int self) {
    const Node& nd = t.node(self);
    for (int j = 0; j < n; ++j) {
      Tensor& g = t.grad(nd.inputs[j]);
      for (int i = 0; i < m; ++i) g.data[i] += nd.grad.data[i * n + j];
    }
  });
  return DT{cols[0].tape, id};
}

DT to_complex(DT re) {
  const Tensor& A = re.val();
  if (A.complex) throw std::invalid_argument("to_complex: input already complex");
  Tensor out = Tensor::zeros(A.shape, true);
  for (int i = 0; i < A.numel(); ++i) out.data[2 * i] = A.data[i];
  int id = re.tape->push("to_complex", {re.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    Tensor& g = t.grad(n.inputs[0]);
    for (int i = 0; i < g.numel(); ++i) g.data[i] += n.grad.data[2 * i];
  });
  return DT{re.tape, id};
}

DT real_part(DT z) {
  const Tensor& A = z.val();
  if (!A.complex) throw std::invalid_argument("real_part: complex input required");
  Tensor out = Tensor::zeros(A.shape);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = A.data[2 * i];
  int id = z.tape->push("real", {z.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    Tensor& g = t.grad(n.inputs[0]);
    for (int i = 0; i < n.value.numel(); ++i) g.data[2 * i] += n.grad.data[i];
  });
  return DT{z.tape, id};
}

DT imag_part(DT z) {
  const Tensor& A = z.val();
  if (!A.complex) throw std::invalid_argument("imag_part: complex input required");
  Tensor out = Tensor::zeros(A.shape);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = A.data[2 * i + 1];
  int id = z.tape->push("imag", {z.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    Tensor& g = t.grad(n.inputs[0]);
    for (int i = 0; i < n.value.numel(); ++i) g.data[2 * i + 1] += n.grad.data[i];
  });
  return DT{z.tape, id};
}

DT conj_(DT z) {
  const Tensor& A = z.val();
  if (!A.complex) throw std::invalid_argument("conj: complex input required");
  Tensor out = A;
  for (int i = 0; i < A.numel(); ++i) out.data[2 * i + 1] = -out.data[2 * i + 1];
  int id = z.tape->push("conj", {z.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    Tensor& g = t.grad(n.inputs[0]);
    for (int i = 0; i < n.value.numel(); ++i) {
      g.data[2 * i] += n.grad.data[2 * i];
      g.data[2 * i + 1] -= n.grad.data[2 * i + 1];
    }
  });
  return DT{z.tape, id};
}

DT cmul(DT a, DT b) {
  const Tensor &A = a.val(), &B = b.val();
  if (!A.complex || !B.complex || A.shape != B.shape) shape_error("cmul", A, B);
  Tensor out = Tensor::zeros(A.shape, true);
  for (int i = 0; i < A.numel(); ++i) out.set_cplx(i, A.cplx(i) * B.cplx(i));
  int id = a.tape->push("cmul", {a.id, b.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    const Tensor &A = t.value(n.inputs[0]), &B = t.value(n.inputs[1]);
    Tensor &ga = t.grad(n.inputs[0]), &gb = t.grad(n.inputs[1]);
    for (int i = 0; i < A.numel(); ++i) {
      const std::complex<double> g = n.grad.cplx(i);
      ga.set_cplx(i, ga.cplx(i) + std::conj(B.cplx(i)) * g);
      gb.set_cplx(i, gb.cplx(i) + std::conj(A.cplx(i)) * g);
    }
  });
  return DT{a.tape, id};
}

DT modulus_squared(DT z) {
  const Tensor& A = z.val();
  if (!A.complex) throw std::invalid_argument("modulus_squared: complex input required");
  Tensor out = Tensor::zeros(A.shape);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = std::norm(A.cplx(i));
  int id = z.tape->push("mod2", {z.id}, std::move(out), [](Tape& t, int self) {
    const Node& n = t.node(self);
    const Tensor& A = t.value(n.inputs[0]);
    Tensor& g = t.grad(n.inputs[0]);
    for (int i = 0; i < n.value.numel(); ++i) {
      g.data[2 * i] += 2.0 * A.data[2 * i] * n.grad.data[i];
      g.data[2 * i + 1] += 2.0 * A.data[2 * i + 1] * n.grad.data[i];
    }
  });
  return DT{z.tape, id};
}

// ---- discrete Fourier transforms ----

void fft_inplace(std::vector<std::complex<double>>& v, bool inverse) {
  const size_t n = v.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft_inplace: power-of-two length");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(v[i], v[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = v[i + j], t = v[i + j + len / 2] * w;
        v[i + j] = u + t;
        v[i + j + len / 2] = u - t;
        w *= wl;
      }
    }
  }
}

std::vector<std::complex<double>> dft_direct(const std::vector<std::complex<double>>& v,
                                             bool inverse) {
  const size_t n = v.size();
  std::vector<std::complex<double>> out(n);
  const double sgn = inverse ? 2.0 : -2.0;
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0);
    for (size_t j = 0; j < n; ++j) {
      const double ang = sgn * M_PI * static_cast<double>(j * k % n) / static_cast<double>(n);
      acc += v[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

namespace {

std::vector<std::complex<double>> tensor_to_cvec(const Tensor& t) {
  std::vector<std::complex<double>> v(t.numel());
  if (t.complex) {
    for (int i = 0; i < t.numel(); ++i) v[i] = t.cplx(i);
  } else {
    for (int i = 0; i < t.numel(); ++i) v[i] = t.data[i];
  }
  return v;
}

Tensor cvec_to_tensor(const std::vector<std::complex<double>>& v, std::vector<int> shape) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (size_t i = 0; i < v.size(); ++i) t.set_cplx(static_cast<int>(i), v[i]);
  return t;
}

std::vector<std::complex<double>> transform(std::vector<std::complex<double>> v, bool inverse) {
  const size_t n = v.size();
  if (n > 1 && (n & (n - 1)) == 0) {
    fft_inplace(v, inverse);
    return v;
  }
  return dft_direct(v, inverse);
}

DT transform_node(DT x, bool inverse, double post_scale, const char* name) {
  const Tensor& X = x.val();
  if (X.shape.size() != 1) throw std::invalid_argument(std::string(name) + ": rank-1 input");
  const bool real_in = !X.complex;
  auto v = transform(tensor_to_cvec(X), inverse);
  if (post_scale != 1.0)
    for (auto& z : v) z *= post_scale;
  Tensor out = cvec_to_tensor(v, X.shape);
  int id = x.tape->push(name, {x.id}, std::move(out),
                        [inverse, post_scale, real_in](Tape& t, int self) {
    const Node& n = t.node(self);
    // adjoint of the (scaled) transform kernel is the opposite-sign kernel
    auto g = transform(tensor_to_cvec(n.grad), !inverse);
    Tensor& gi = t.grad(n.inputs[0]);
    if (real_in) {
      for (int i = 0; i < gi.numel(); ++i) gi.data[i] += post_scale * g[i].real();
    } else {
      for (int i = 0; i < gi.numel(); ++i)
        gi.set_cplx(i, gi.cplx(i) + post_scale * g[i]);
    }
  });
  return DT{x.tape, id};
}

}  // namespace

DT dft(DT x) { return transform_node(x, false, 1.0, "dft"); }
DT idft(DT x) {
  if (!x.val().complex) throw std::invalid_argument("idft: complex input required");
  return transform_node(x, true, 1.0, "idft");
}
DT idft_normalized(DT x) {
  if (!x.val().complex) throw std::invalid_argument("idft_normalized: complex input required");
  return transform_node(x, true, 1.0 / x.val().numel(), "idftn");
}

DT mode_mix(DT P, DT X, int n_modes, int out_ch) {
  const Tensor &TP = P.val(), &TX = X.val();
  if (!TP.complex || !TX.complex) throw std::invalid_argument("mode_mix: complex tensors required");
  if (TX.shape.size() != 2) throw std::invalid_argument("mode_mix: X must be [s x in]");
  const int s = TX.shape[0], in_ch = TX.shape[1];
  if (TP.numel() != n_modes * out_ch * in_ch)
    throw std::invalid_argument("mode_mix: P size does not match modes x out x in");
  if (s < 2 * n_modes)
    throw std::invalid_argument("mode_mix: need sample count >= 2 x retained modes");
  Tensor out = Tensor::zeros({s, out_ch}, true);
  for (int m = 0; m < n_modes; ++m)
    for (int o = 0; o < out_ch; ++o) {
      std::complex<double> acc(0.0);
      for (int i = 0; i < in_ch; ++i)
        acc += TP.cplx((m * out_ch + o) * in_ch + i) * TX.cplx(m * in_ch + i);
      out.set_cplx(m * out_ch + o, acc);
    }
  int id = P.tape->push("mode_mix", {P.id, X.id}, std::move(out),
                        [n_modes, out_ch](Tape& t, int self) {
    const Node& n = t.node(self);
    const Tensor &TP = t.value(n.inputs[0]), &TX = t.value(n.inputs[1]);
    const int in_ch = TX.shape[1];
    Tensor &gP = t.grad(n.inputs[0]), &gX = t.grad(n.inputs[1]);
    for (int m = 0; m < n_modes; ++m)
      for (int o = 0; o < out_ch; ++o) {
        const std::complex<double> g = n.grad.cplx(m * out_ch + o);
        for (int i = 0; i < in_ch; ++i) {
          const int pi = (m * out_ch + o) * in_ch + i;
          gP.set_cplx(pi, gP.cplx(pi) + g * std::conj(TX.cplx(m * in_ch + i)));
          gX.set_cplx(m * in_ch + i,
                      gX.cplx(m * in_ch + i) + std::conj(TP.cplx(pi)) * g);
        }
      }
  });
  return DT{P.tape, id};
}

DT mirror_spectrum(DT Y, int n_modes) {
  const Tensor& TY = Y.val();
  if (!TY.complex || TY.shape.size() != 2)
    throw std::invalid_argument("mirror_spectrum: complex [s x c] input");
  const int s = TY.shape[0], c = TY.shape[1];
  if (s < 2 * n_modes) throw std::invalid_argument("mirror_spectrum: s < 2 n_modes");
  Tensor out = TY;
  for (int m = 1; m < n_modes; ++m)
    for (int j = 0; j < c; ++j) out.set_cplx((s - m) * c + j, std::conj(TY.cplx(m * c + j)));
  int id = Y.tape->push("mirror", {Y.id}, std::move(out), [n_modes, s, c](Tape& t, int self) {
    const Node& n = t.node(self);
    Tensor& g = t.grad(n.inputs[0]);
    for (int m = 0; m < s; ++m) {
      const bool target = (m > s - n_modes);  // rows overwritten by mirroring
      for (int j = 0; j < c; ++j) {
        if (!target) g.set_cplx(m * c + j, g.cplx(m * c + j) + n.grad.cplx(m * c + j));
      }
    }
    for (int m = 1; m < n_modes; ++m)
      for (int j = 0; j < c; ++j)
        g.set_cplx(m * c + j, g.cplx(m * c + j) + std::conj(n.grad.cplx((s - m) * c + j)));
  });
  return DT{Y.tape, id};
}

DT stack_rows(const std::vector<DT>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
  const int n = rows[0].val().numel();
  std::vector<int> ids;
  for (const DT& r : rows) {
    if (r.val().complex || r.val().shape.size() != 1 || r.val().shape[0] != n)
      throw std::invalid_argument("stack_rows: rank-1 real inputs of equal length");
    ids.push_back(r.id);
  }
  const int m = static_cast<int>(rows.size());
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) out.data.segment(i * n, n) = rows[i].val().data;
  int id = rows[0].tape->push("stack_rows", ids, std::move(out), [n](Tape& t, int self) {
    const Node& nd = t.node(self);
    for (size_t i = 0; i < nd.inputs.size(); ++i)
      t.grad(nd.inputs[i]).data += nd.grad.data.segment(static_cast<int>(i) * n, n);
  });
  return DT{rows[0].tape, id};
}

DT add_bias(DT a, DT b) {
  const Tensor &A = a.val(), &B = b.val();
  if (A.complex || B.complex || A.shape.size() != 2 || B.numel() != A.shape[1])
    shape_error("add_bias", A, B);
  const int m = A.shape[0], n = A.shape[1];
  Tensor out = A;
  for (int i = 0; i < m; ++i) out.data.segment(i * n, n) += B.data;
  int id = a.tape->push("add_bias", {a.id, b.id}, std::move(out), [m, n](Tape& t, int self) {
    const Node& nd = t.node(self);
    t.grad(nd.inputs[0]).data += nd.grad.data;
    Tensor& gb = t.grad(nd.inputs[1]);
    for (int i = 0; i < m; ++i) gb.data += nd.grad.data.segment(i * n, n);
  });
  return DT{a.tape, id};
}

DT pad_rows(DT a, int new_rows) {
  const Tensor& A = a.val();
  if (A.complex || A.shape.size() != 2) throw std::invalid_argument("pad_rows: rank-2 real input");
  const int m = A.shape[0], n = A.shape[1];
  if (new_rows < m) throw std::invalid_argument("pad_rows: target smaller than input");
  Tensor out = Tensor::zeros({new_rows, n});
  out.data.head(m * n) = A.data;
  int id = a.tape->push("pad_rows", {a.id}, std::move(out), [m, n](Tape& t, int self) {
    const Node& nd = t.node(self);
    t.grad(nd.inputs[0]).data += nd.grad.data.head(m * n);
  });
  return DT{a.tape, id};
}

DT crop_rows(DT a, int new_rows) {
  const Tensor& A = a.val();
  if (A.complex || A.shape.size() != 2) throw std::invalid_argument("crop_rows: rank-2 real input");
  const int m = A.shape[0], n = A.shape[1];
  if (new_rows > m) throw std::invalid_argument("crop_rows: target larger than input");
  Tensor out = Tensor::zeros({new_rows, n});
  out.data = A.data.head(new_rows * n);
  int id = a.tape->push("crop_rows", {a.id}, std::move(out), [n, new_rows](Tape& t, int self) {
    const Node& nd = t.node(self);
    t.grad(nd.inputs[0]).data.head(new_rows * n) += nd.grad.data;
  });
  return DT{a.tape, id};
}

namespace {

// per-column transform of a [s x c] tensor; returns complex columns
Tensor cols_transform(const Tensor& A, bool inverse, double post_scale) {
  const int s = A.shape[0], c = A.shape[1];
  Tensor out = Tensor::zeros({s, c}, true);
  std::vector<std::complex<double>> col(s);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < s; ++i)
      col[i] = A.complex ? A.cplx(i * c + j) : std::complex<double>(A.data[i * c + j], 0.0);
    col = transform(std::move(col), inverse);
    for (int i = 0; i < s; ++i) out.set_cplx(i * c + j, post_scale * col[i]);
  }
  return out;
}

}  // namespace

DT dft_cols(DT a) {
  const Tensor& A = a.val();
  if (A.shape.size() != 2) throw std::invalid_argument("dft_cols: rank-2 input");
  const bool real_in = !A.complex;
  const int s = A.shape[0], c = A.shape[1];
  Tensor out = cols_transform(A, false, 1.0);
  int id = a.tape->push("dft_cols", {a.id}, std::move(out), [real_in, s, c](Tape& t, int self) {
    const Node& nd = t.node(self);
    Tensor g = cols_transform(nd.grad, true, 1.0);  // adjoint kernel
    Tensor& gi = t.grad(nd.inputs[0]);
    if (real_in) {
      for (int i = 0; i < s * c; ++i) gi.data[i] += g.data[2 * i];
    } else {
      gi.data += g.data;
    }
  });
  return DT{a.tape, id};
}

DT idftn_cols_real(DT a, double* imag_residue) {
  const Tensor& A = a.val();
  if (!A.complex || A.shape.size() != 2)
    throw std::invalid_argument("idftn_cols_real: complex rank-2 input");
  const int s = A.shape[0], c = A.shape[1];
  Tensor z = cols_transform(A, true, 1.0 / s);
  if (imag_residue) {
    double r = 0.0;
    for (int i = 0; i < s * c; ++i) r = std::max(r, std::abs(z.data[2 * i + 1]));
    *imag_residue = r;
  }
  Tensor out = Tensor::zeros({s, c});
  for (int i = 0; i < s * c; ++i) out.data[i] = z.data[2 * i];
  int id = a.tape->push("idftn_cols_real", {a.id}, std::move(out), [s, c](Tape& t, int self) {
    const Node& nd = t.node(self);
    Tensor gr = Tensor::zeros({s, c});
    gr.data = nd.grad.data;
    Tensor g = cols_transform(gr, false, 1.0 / s);  // adjoint of (idft/s) then real-part embed
    t.grad(nd.inputs[0]).data += g.data;
  });
  return DT{a.tape, id};
}

double gradcheck(const std::function<DT(Tape&, const std::vector<DT>&)>& build,
                 const std::vector<Tensor>& leaves, double h) {
  // analytic gradients
  std::vector<Tensor> grads;
  {
    Tape tape;
    std::vector<DT> xs;
    for (const Tensor& l : leaves) xs.push_back(tape.leaf(l));
    DT out = build(tape, xs);
    tape.backward(out);
    for (const DT& x : xs) grads.push_back(tape.grad(x.id));
  }
  auto eval = [&](const std::vector<Tensor>& pts) {
    Tape tape;
    std::vector<DT> xs;
    for (const Tensor& l : pts) xs.push_back(tape.leaf(l));
    return build(tape, xs).val().scalar_value();
  };

  std::vector<std::pair<int, int>> coords;
  for (size_t li = 0; li < leaves.size(); ++li)
    for (int i = 0; i < leaves[li].data.size(); ++i) coords.push_back({static_cast<int>(li), i});
  if (coords.size() > 1000) {
    std::mt19937 rng(12345);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(1000);
  }

  double max_rel = 0.0;
  std::vector<Tensor> work = leaves;
  for (auto [li, i] : coords) {
    const double x0 = work[li].data[i];
    work[li].data[i] = x0 + h;
    const double fp = eval(work);
    work[li].data[i] = x0 - h;
    const double fm = eval(work);
    work[li].data[i] = x0;
    const double fd = (fp - fm) / (2.0 * h);
    const double ad = grads[li].data[i];
    const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-6});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace thz::ad
