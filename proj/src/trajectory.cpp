// SPDX-License-Identifier: Apache-2.0
#include "thz/trajectory.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "thz/gcc.hpp"

namespace thz {

void TrajectorySeries::validate() const {
  if (value.size() < 2 || value.size() != deriv.size())
    throw std::invalid_argument("TrajectorySeries: need matching value/deriv channels, >= 2 samples");
  if (!(k > 0.0)) throw std::invalid_argument("TrajectorySeries: nonpositive spacing");
}

std::vector<double> collocation_points(double period, int m) {
  if (period <= 0.0) throw std::invalid_argument("collocation_points: period must be > 0");
  if (m < 1) throw std::invalid_argument("collocation_points: need at least one period");
  std::vector<double> xs(m);
  for (int i = 1; i <= m; ++i) xs[i - 1] = period * i;
  return xs;
}

std::pair<double, double> hermite_reconstruct(const TrajectorySeries& s, double t) {
  s.validate();
  const int n = s.n_steps();
  const double rel = (t - s.t0) / s.k;
  if (rel < -1e-12 || rel > n + 1e-12)
    throw std::out_of_range("hermite_reconstruct: t outside the series range");
  int idx = static_cast<int>(std::floor(rel));
  idx = std::max(0, std::min(n - 1, idx));
  const double th = rel - idx;
  const double c[4] = {s.value[idx], s.k * s.deriv[idx], s.value[idx + 1], s.k * s.deriv[idx + 1]};
  double v = 0, d = 0;
  for (int j = 0; j < 4; ++j) {
    const auto [xj, dxj] = hermite_eval(j, th);
    v += c[j] * xj;
    d += c[j] * dxj;
  }
  return {v, d / s.k};
}

ErrorNorms error_norms(const TrajectorySeries& a, const TrajectorySeries& b) {
  a.validate();
  b.validate();
  if (a.n_steps() != b.n_steps() || std::abs(a.k - b.k) > 1e-15 * std::abs(a.k) ||
      std::abs(a.t0 - b.t0) > 1e-12 * std::max(1.0, std::abs(a.t0)))
    throw std::invalid_argument("error_norms: trajectory grids differ");
  ErrorNorms out;
  for (int i = 0; i <= a.n_steps(); ++i)
    out.linf_l2 = std::max(out.linf_l2, std::abs(a.value[i] - b.value[i]));
  double acc = 0.0;
  for (int n = 0; n < a.n_steps(); ++n) {
    const double c[4] = {a.value[n] - b.value[n], a.k * (a.deriv[n] - b.deriv[n]),
                         a.value[n + 1] - b.value[n + 1], a.k * (a.deriv[n + 1] - b.deriv[n + 1])};
    for (int q = 0; q < 4; ++q) {
      const double th = GaussRule4::pts[q];
      double v = 0;
      for (int j = 0; j < 4; ++j) v += c[j] * hermite_eval(j, th).first;
      acc += GaussRule4::wts[q] * a.k * v * v;
    }
  }
  out.l2_l2 = std::sqrt(acc);
  return out;
}

namespace {

constexpr char kMagic[8] = {'T', 'H', 'Z', 'D', 'A', 'T', 'A', '\0'};

uint64_t fnv1a(const unsigned char* p, size_t n) {
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void dataset_write(const std::string& path, const Dataset& ds) {
  if (ds.series.empty()) throw std::invalid_argument("dataset_write: no series");
  const double k = ds.series.front().k;
  const int n = ds.series.front().n_steps();
  for (const auto& s : ds.series) {
    s.validate();
    if (s.n_steps() != n || s.k != k)
      throw std::invalid_argument("dataset_write: series grids differ");
  }

  std::vector<double> payload;
  payload.reserve(ds.series.size() * (n + 1) * 2);
  for (const auto& s : ds.series)
    for (int i = 0; i <= n; ++i) {
      payload.push_back(s.value[i]);
      payload.push_back(s.deriv[i]);
    }
  const uint64_t bytes = payload.size() * sizeof(double);

  nlohmann::json j;
  j["version"] = 1;
  j["k"] = k;
  j["n_steps"] = n;
  j["channels"] = {"value", "deriv"};
  auto pts = nlohmann::json::array();
  for (const auto& s : ds.series) pts.push_back({{"x", s.x}, {"t0", s.t0}, {"k", s.k}});
  j["points"] = pts;
  j["payload_fnv1a"] = fnv1a(reinterpret_cast<const unsigned char*>(payload.data()), bytes);
  for (const auto& [key, val] : ds.meta) j["meta"][key] = val;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset_write: cannot open " + path);
  f.write(kMagic, 8);
  const std::string man = j.dump();
  f.write(man.data(), static_cast<std::streamsize>(man.size()));
  f.write(reinterpret_cast<const char*>(&bytes), 8);
  f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(bytes));
  if (!f) throw std::runtime_error("dataset_write: write failed for " + path);
}

Dataset dataset_read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset_read: cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (raw.size() < 16 || std::memcmp(raw.data(), kMagic, 8) != 0)
    throw std::runtime_error("dataset_read: bad magic in " + path);

  // the manifest is one JSON object; find its end by brace balance
  size_t pos = 8;
  if (raw[pos] != '{') throw std::runtime_error("dataset_read: manifest missing");
  int depth = 0;
  bool in_str = false;
  size_t end = pos;
  for (size_t i = pos; i < raw.size(); ++i) {
    const char ch = raw[i];
    if (in_str) {
      if (ch == '\\') ++i;
      else if (ch == '"') in_str = false;
    } else if (ch == '"') {
      in_str = true;
    } else if (ch == '{') {
      ++depth;
    } else if (ch == '}') {
      if (--depth == 0) {
        end = i + 1;
        break;
      }
    }
  }
  if (depth != 0) throw std::runtime_error("dataset_read: truncated manifest");
  nlohmann::json j = nlohmann::json::parse(raw.substr(pos, end - pos));
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("dataset_read: unknown version " + j.at("version").dump());

  if (raw.size() < end + 8) throw std::runtime_error("dataset_read: missing payload length");
  uint64_t bytes;
  std::memcpy(&bytes, raw.data() + end, 8);
  if (raw.size() - end - 8 != bytes)
    throw std::runtime_error("dataset_read: payload length mismatch (manifest says " +
                             std::to_string(bytes) + ", file holds " +
                             std::to_string(raw.size() - end - 8) + ")");

  const int n = j.at("n_steps").get<int>();
  const double k = j.at("k").get<double>();
  const auto& pts = j.at("points");
  const uint64_t expect = static_cast<uint64_t>(pts.size()) * (n + 1) * 2 * sizeof(double);
  if (bytes != expect)
    throw std::runtime_error("dataset_read: payload length mismatch (grid implies " +
                             std::to_string(expect) + " bytes)");
  const uint64_t h = fnv1a(reinterpret_cast<const unsigned char*>(raw.data() + end + 8), bytes);
  if (j.contains("payload_fnv1a") && j["payload_fnv1a"].get<uint64_t>() != h)
    throw std::runtime_error("dataset_read: payload checksum mismatch");

  Dataset ds;
  const double* d = reinterpret_cast<const double*>(raw.data() + end + 8);
  for (size_t p = 0; p < pts.size(); ++p) {
    TrajectorySeries s;
    s.x = pts[p].at("x").get<double>();
    s.t0 = pts[p].at("t0").get<double>();
    s.k = k;
    if (pts[p].contains("k") && pts[p]["k"].get<double>() != k)
      throw std::runtime_error("dataset_read: per-point spacing disagrees with manifest k");
    s.value.resize(n + 1);
    s.deriv.resize(n + 1);
    for (int i = 0; i <= n; ++i) {
      s.value[i] = d[(p * (n + 1) + i) * 2];
      s.deriv[i] = d[(p * (n + 1) + i) * 2 + 1];
    }
    ds.series.push_back(std::move(s));
  }
  if (j.contains("meta"))
    for (auto it = j["meta"].begin(); it != j["meta"].end(); ++it)
      ds.meta[it.key()] = it.value().get<std::string>();
  return ds;
}

}  // namespace thz
