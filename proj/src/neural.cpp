// SPDX-License-Identifier: Apache-2.0
#include "thz/neural.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"

namespace thz {

using ad::DT;
using ad::Tape;
using ad::Tensor;

std::int64_t fno_param_count(const FnoConfig& c) {
  const std::int64_t w = c.width;
  return w * c.d_in + c.layers * (w * w + w + 2ll * c.n_modes * w * w) + c.d_out * w + c.d_out;
}

namespace {

Tensor randn(std::vector<int> shape, bool complex, double scale, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(std::move(shape), complex);
  std::normal_distribution<double> dist(0.0, scale);
  for (int i = 0; i < t.data.size(); ++i) t.data[i] = dist(rng);
  return t;
}

}  // namespace

FnoParams fno_init(const FnoConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FnoParams p;
  p.lift = randn({c.d_in, c.width}, false, 1.0 / std::sqrt(c.d_in), rng);
  for (int l = 0; l < c.layers; ++l) {
    p.W.push_back(randn({c.width, c.width}, false, 1.0 / std::sqrt(c.width), rng));
    p.b.push_back(Tensor::zeros({c.width}));
    p.P.push_back(randn({c.n_modes, c.width, c.width}, true, 1.0 / c.width, rng));
  }
  p.proj = randn({c.width, c.d_out}, false, 1.0 / std::sqrt(c.width), rng);
  p.proj_b = Tensor::zeros({c.d_out});
  return p;
}

std::int64_t gru_param_count(const GruConfig& c) {
  std::int64_t n = 0;
  for (int l = 0; l < c.layers; ++l) {
    const int d = (l == 0) ? c.d_in : c.hidden;
    n += 3ll * (c.hidden * d + c.hidden * c.hidden + c.hidden);
  }
  return n + c.hidden * c.d_out + c.d_out;
}

GruParams gru_init(const GruConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GruParams p;
  for (int l = 0; l < c.layers; ++l) {
    const int d = (l == 0) ? c.d_in : c.hidden;
    GruParams::Layer L;
    const double si = 1.0 / std::sqrt(d), sh = 1.0 / std::sqrt(c.hidden);
    L.Wz = randn({c.hidden, d}, false, si, rng);
    L.Wr = randn({c.hidden, d}, false, si, rng);
    L.Wh = randn({c.hidden, d}, false, si, rng);
    L.Uz = randn({c.hidden, c.hidden}, false, sh, rng);
    L.Ur = randn({c.hidden, c.hidden}, false, sh, rng);
    L.Uh = randn({c.hidden, c.hidden}, false, sh, rng);
    L.bz = Tensor::zeros({c.hidden});
    L.br = Tensor::zeros({c.hidden});
    L.bh = Tensor::zeros({c.hidden});
    p.layers.push_back(std::move(L));
  }
  p.proj = randn({c.hidden, c.d_out}, false, 1.0 / std::sqrt(c.hidden), rng);
  p.proj_b = Tensor::zeros({c.d_out});
  return p;
}

Bound bind_fno(Tape& tape, const FnoParams& p, bool trainable) {
  Bound b;
  b.leaves.push_back(tape.leaf(p.lift, trainable));
  for (size_t l = 0; l < p.W.size(); ++l) {
    b.leaves.push_back(tape.leaf(p.W[l], trainable));
    b.leaves.push_back(tape.leaf(p.b[l], trainable));
    b.leaves.push_back(tape.leaf(p.P[l], trainable));
  }
  b.leaves.push_back(tape.leaf(p.proj, trainable));
  b.leaves.push_back(tape.leaf(p.proj_b, trainable));
  return b;
}

Bound bind_gru(Tape& tape, const GruParams& p, bool trainable) {
  Bound b;
  for (const auto& L : p.layers)
    for (const Tensor* t : {&L.Wz, &L.Wr, &L.Wh, &L.Uz, &L.Ur, &L.Uh, &L.bz, &L.br, &L.bh})
      b.leaves.push_back(tape.leaf(*t, trainable));
  b.leaves.push_back(tape.leaf(p.proj, trainable));
  b.leaves.push_back(tape.leaf(p.proj_b, trainable));
  return b;
}

namespace {

DT activate(DT x, Activation a) { return a == Activation::tanh ? ad::tanh_(x) : x; }

}  // namespace

FnoForward fno_forward(Tape& tape, const FnoConfig& cfg, const Bound& bound, ad::DT v) {
  const Tensor& V = v.val();
  if (V.shape.size() != 2 || V.shape[1] != cfg.d_in)
    throw std::invalid_argument("fno_forward: input must be [s x d_in]");
  const int s = V.shape[0];
  if (s < 2 * cfg.n_modes)
    throw std::invalid_argument("fno_forward: sample count below 2 x retained modes");

  int li = 0;
  DT lift = bound.leaves[li++];
  DT x = ad::matmul(v, lift);  // [s x w]

  const int s_pad = s + static_cast<int>(std::lround(cfg.pad_fraction * s));
  if (s_pad > s) x = ad::pad_rows(x, s_pad);

  double worst_imag = 0.0;
  for (int l = 0; l < cfg.layers; ++l) {
    DT W = bound.leaves[li++];
    DT b = bound.leaves[li++];
    DT P = bound.leaves[li++];
    DT local = ad::add_bias(ad::matmul(x, W), b);
    DT spec = ad::dft_cols(x);
    spec = ad::mode_mix(P, spec, cfg.n_modes, cfg.width);
    spec = ad::mirror_spectrum(spec, cfg.n_modes);
    double res = 0.0;
    DT conv = ad::idftn_cols_real(spec, &res);
    worst_imag = std::max(worst_imag, res);
    x = activate(ad::add(local, conv), cfg.activation);
  }

  if (s_pad > s) x = ad::crop_rows(x, s);
  DT out = ad::add_bias(ad::matmul(x, bound.leaves[li]), bound.leaves[li + 1]);
  return {out, worst_imag};
}

ad::DT gru_forward(Tape& tape, const GruConfig& cfg, const Bound& bound, ad::DT seq) {
  const Tensor& S = seq.val();
  if (S.shape.size() != 2 || S.shape[1] != cfg.d_in)
    throw std::invalid_argument("gru_forward: input must be [N+1 x d_in]");
  const int n = S.shape[0];

  std::vector<DT> rows;
  rows.reserve(n);
  for (int i = 0; i < n; ++i) rows.push_back(ad::get_row(seq, i));

  int li = 0;
  for (int l = 0; l < cfg.layers; ++l) {
    DT Wz = bound.leaves[li++], Wr = bound.leaves[li++], Wh = bound.leaves[li++];
    DT Uz = bound.leaves[li++], Ur = bound.leaves[li++], Uh = bound.leaves[li++];
    DT bz = bound.leaves[li++], br = bound.leaves[li++], bh = bound.leaves[li++];
    DT h = tape.constant(Tensor::zeros({cfg.hidden}));
    std::vector<DT> outs;
    outs.reserve(n);
    for (int i = 0; i < n; ++i) {
      DT xin = rows[i];
      DT z = ad::logistic(ad::add(ad::add(ad::matmul(Wz, xin), ad::matmul(Uz, h)), bz));
      DT r = ad::logistic(ad::add(ad::add(ad::matmul(Wr, xin), ad::matmul(Ur, h)), br));
      DT cand =
          ad::tanh_(ad::add(ad::add(ad::matmul(Wh, xin), ad::matmul(Uh, ad::mul(r, h))), bh));
      DT one_minus_z = ad::shift(ad::neg(z), 1.0);
      h = ad::add(ad::mul(z, h), ad::mul(one_minus_z, cand));
      outs.push_back(h);
    }
    rows = std::move(outs);
  }
  DT hid = ad::stack_rows(rows);  // [n x hidden]
  return ad::add_bias(ad::matmul(hid, bound.leaves[li]), bound.leaves[li + 1]);
}

std::vector<ad::Tensor*> SolutionOperator::param_ptrs() {
  std::vector<Tensor*> v;
  if (kind == Kind::fno) {
    v.push_back(&fno_params.lift);
    for (size_t l = 0; l < fno_params.W.size(); ++l) {
      v.push_back(&fno_params.W[l]);
      v.push_back(&fno_params.b[l]);
      v.push_back(&fno_params.P[l]);
    }
    v.push_back(&fno_params.proj);
    v.push_back(&fno_params.proj_b);
  } else {
    for (auto& L : gru_params.layers)
      for (Tensor* t : {&L.Wz, &L.Wr, &L.Wh, &L.Uz, &L.Ur, &L.Uh, &L.bz, &L.br, &L.bh})
        v.push_back(t);
    v.push_back(&gru_params.proj);
    v.push_back(&gru_params.proj_b);
  }
  return v;
}

std::vector<const ad::Tensor*> SolutionOperator::param_ptrs() const {
  auto mut = const_cast<SolutionOperator*>(this)->param_ptrs();
  return {mut.begin(), mut.end()};
}

Bound bind_operator(Tape& tape, const SolutionOperator& op, bool trainable) {
  return op.kind == SolutionOperator::Kind::fno ? bind_fno(tape, op.fno_params, trainable)
                                                : bind_gru(tape, op.gru_params, trainable);
}

std::pair<ad::DT, ad::DT> operator_forward(Tape& tape, const SolutionOperator& op,
                                           const Bound& bound, ad::DT value, ad::DT deriv) {
  const int s = value.val().numel();
  if (s != op.n_steps + 1 || deriv.val().numel() != s)
    throw std::invalid_argument("operator_forward: trajectory grid does not match the operator");
  std::vector<DT> cols = {value, deriv};
  const int d_in = op.kind == SolutionOperator::Kind::fno ? op.fno_cfg.d_in : op.gru_cfg.d_in;
  if (d_in == 3) {
    Eigen::VectorXd t(s);
    for (int i = 0; i < s; ++i) t[i] = static_cast<double>(i) / (s - 1);
    cols.push_back(tape.constant(Tensor::from_vec(t)));
  } else if (d_in != 2) {
    throw std::invalid_argument("operator_forward: d_in must be 2 or 3");
  }
  DT in = ad::stack_cols(cols);
  DT out = op.kind == SolutionOperator::Kind::fno
               ? fno_forward(tape, op.fno_cfg, bound, in).out
               : gru_forward(tape, op.gru_cfg, bound, in);
  const int d_out = out.val().shape[1];
  if (d_out < 2) throw std::invalid_argument("operator_forward: network must emit both channels");
  return {ad::get_col(out, 0), ad::get_col(out, 1)};
}

TrajectorySeries operator_apply(const SolutionOperator& op, const TrajectorySeries& in) {
  in.validate();
  if (in.n_steps() != op.n_steps || std::abs(in.k - op.k) > 1e-14 * std::abs(op.k))
    throw std::invalid_argument("operator_apply: trajectory grid does not match the operator");
  Tape tape;
  Bound bound = bind_operator(tape, op, false);
  DT v = tape.constant(Tensor::from_vec(in.value));
  DT d = tape.constant(Tensor::from_vec(in.deriv));
  auto [ov, od] = operator_forward(tape, op, bound, v, d);
  TrajectorySeries out;
  out.x = in.x + op.period;
  out.t0 = in.t0;
  out.k = in.k;
  out.value = ov.val().data;
  out.deriv = od.val().data;
  return out;
}

TrajectorySeries operator_power(const SolutionOperator& op, int count,
                                const TrajectorySeries& boundary) {
  if (count < 0) throw std::invalid_argument("operator_power: negative count");
  TrajectorySeries cur = boundary;
  for (int i = 0; i < count; ++i) cur = operator_apply(op, cur);
  return cur;
}

std::pair<double, double> SpaceTimeField::eval(double x, double t) const {
  if (interfaces.size() < 2)
    throw std::logic_error("SpaceTimeField: need at least two interfaces");
  size_t hi = 1;
  while (hi + 1 < interfaces.size() && interfaces[hi].x < x) ++hi;
  const TrajectorySeries &a = interfaces[hi - 1], &b = interfaces[hi];
  const double lam = std::clamp((x - a.x) / (b.x - a.x), 0.0, 1.0);
  const auto va = hermite_reconstruct(a, t);
  const auto vb = hermite_reconstruct(b, t);
  return {(1.0 - lam) * va.first + lam * vb.first, (1.0 - lam) * va.second + lam * vb.second};
}

SpaceTimeField spacetime_extend(std::vector<TrajectorySeries> interfaces) {
  if (interfaces.size() < 2)
    throw std::invalid_argument("spacetime_extend: need at least two interfaces");
  for (size_t i = 1; i < interfaces.size(); ++i)
    if (interfaces[i].x <= interfaces[i - 1].x)
      throw std::invalid_argument("spacetime_extend: interfaces must ascend in x");
  return SpaceTimeField{std::move(interfaces)};
}

namespace {
constexpr char kCkptMagic[8] = {'T', 'H', 'Z', 'C', 'K', 'P', 'T', '\0'};
}

void checkpoint_write(const std::string& path, const SolutionOperator& op,
                      const std::map<std::string, std::string>& meta) {
  nlohmann::json j;
  j["version"] = 1;
  j["kind"] = op.kind == SolutionOperator::Kind::fno ? "fno" : "gru";
  j["n_steps"] = op.n_steps;
  j["k"] = op.k;
  j["period"] = op.period;
  if (op.kind == SolutionOperator::Kind::fno) {
    j["fno"] = {{"layers", op.fno_cfg.layers},   {"width", op.fno_cfg.width},
                {"n_modes", op.fno_cfg.n_modes}, {"d_in", op.fno_cfg.d_in},
                {"d_out", op.fno_cfg.d_out},     {"pad_fraction", op.fno_cfg.pad_fraction},
                {"activation", op.fno_cfg.activation == Activation::tanh ? "tanh" : "identity"}};
  } else {
    j["gru"] = {{"layers", op.gru_cfg.layers},
                {"hidden", op.gru_cfg.hidden},
                {"d_in", op.gru_cfg.d_in},
                {"d_out", op.gru_cfg.d_out}};
  }
  for (const auto& [k2, v2] : meta) j["meta"][k2] = v2;

  std::vector<double> payload;
  for (const Tensor* t : op.param_ptrs())
    for (int i = 0; i < t->data.size(); ++i) payload.push_back(t->data[i]);
  j["payload_doubles"] = payload.size();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint_write: cannot open " + path);
  f.write(kCkptMagic, 8);
  const std::string man = j.dump();
  const uint64_t mlen = man.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(man.data(), static_cast<std::streamsize>(man.size()));
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint_write: write failed for " + path);
}

SolutionOperator checkpoint_read(const std::string& path,
                                 std::map<std::string, std::string>* meta) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint_read: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error("checkpoint_read: bad magic in " + path);
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  std::string man(mlen, '\0');
  f.read(man.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw std::runtime_error("checkpoint_read: truncated manifest");
  nlohmann::json j = nlohmann::json::parse(man);
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("checkpoint_read: unknown version");

  SolutionOperator op;
  op.n_steps = j.at("n_steps").get<int>();
  op.k = j.at("k").get<double>();
  op.period = j.at("period").get<double>();
  if (j.at("kind") == "fno") {
    op.kind = SolutionOperator::Kind::fno;
    const auto& c = j.at("fno");
    op.fno_cfg.layers = c.at("layers").get<int>();
    op.fno_cfg.width = c.at("width").get<int>();
    op.fno_cfg.n_modes = c.at("n_modes").get<int>();
    op.fno_cfg.d_in = c.at("d_in").get<int>();
    op.fno_cfg.d_out = c.at("d_out").get<int>();
    op.fno_cfg.pad_fraction = c.at("pad_fraction").get<double>();
    op.fno_cfg.activation =
        c.at("activation") == "tanh" ? Activation::tanh : Activation::identity;
    op.fno_params = fno_init(op.fno_cfg, 0);
  } else {
    op.kind = SolutionOperator::Kind::gru;
    const auto& c = j.at("gru");
    op.gru_cfg.layers = c.at("layers").get<int>();
    op.gru_cfg.hidden = c.at("hidden").get<int>();
    op.gru_cfg.d_in = c.at("d_in").get<int>();
    op.gru_cfg.d_out = c.at("d_out").get<int>();
    op.gru_params = gru_init(op.gru_cfg, 0);
  }

  const uint64_t want = j.at("payload_doubles").get<uint64_t>();
  std::vector<double> payload(want);
  f.read(reinterpret_cast<char*>(payload.data()),
         static_cast<std::streamsize>(want * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint_read: truncated payload");
  size_t at = 0;
  for (Tensor* t : op.param_ptrs()) {
    if (at + t->data.size() > payload.size())
      throw std::runtime_error("checkpoint_read: payload size mismatch");
    for (int i = 0; i < t->data.size(); ++i) t->data[i] = payload[at++];
  }
  if (at != payload.size()) throw std::runtime_error("checkpoint_read: payload size mismatch");
  if (meta && j.contains("meta"))
    for (auto it = j["meta"].begin(); it != j["meta"].end(); ++it)
      (*meta)[it.key()] = it.value().get<std::string>();
  return op;
}

}  // namespace thz
