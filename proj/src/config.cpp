// SPDX-License-Identifier: Apache-2.0
#include "thz/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

extern char** environ;

namespace thz {

const std::map<std::string, std::string>& RunConfig::default_table() {
  static const std::map<std::string, std::string> table = {
      // domain geometry in normalized units (c0 = 1)
      {"domain.x_left", "0"},
      {"domain.x_right", "1"},
      {"domain.poling_period", "0.25"},
      {"domain.n_periods", "3"},
      {"domain.pml_width", "0.5"},
      {"domain.n_elem_physical", "192"},
      {"domain.n_elem_pml", "48"},
      // Lorentz medium
      {"material.gamma0", "0.1"},
      {"material.nu_t", "8"},
      {"material.eps_omega", "1"},
      {"material.eps_Omega", "1.5"},
      {"material.chi2", "0.05"},
      // time marching
      {"time.t_final", "4"},
      {"time.n_slabs", "2048"},
      {"time.newton_abs_tol", "1e-11"},
      {"time.newton_rel_tol", "1e-12"},
      {"time.newton_max_iter", "12"},
      {"time.abs_mode", "contraction"},  // or "magnitude"
      // pml closure
      {"pml.grade_power", "2"},
      {"pml.round_trip", "1e-6"},
      // convergence harness
      {"convergence.levels", "5"},
      {"convergence.base_elems", "16"},
      {"convergence.base_slabs", "32"},
      {"convergence.t_final", "1"},
      {"convergence.chi2", "0.1"},
      {"convergence.omega1", "2"},
      {"convergence.omega2", "3"},
      {"convergence.speed1", "1"},
      {"convergence.speed2", "1.5"},
      {"convergence.with_pml", "0"},
      // surrogate network
      {"network.kind", "fno"},  // or "gru"
      {"network.layers", "4"},
      {"network.width", "8"},
      {"network.n_modes", "8"},
      {"network.pad_fraction", "0.25"},
      {"network.gru_hidden", "8"},
      {"network.grid_channel", "1"},
      // training
      {"training.epochs", "400"},
      {"training.loss", "l_dt"},  // l2 | l_dt | l_c1
      {"training.optimizer", "adamw"},
      {"training.lr", "1e-3"},
      {"training.weight_decay", "0"},
      {"training.workers", "1"},
      {"training.train_fraction", "0.6"},
      {"training.seed", "1"},
      // pulse + optimal control
      {"ocp.n_components", "2"},
      {"ocp.tau", "1.0"},
      {"ocp.p", "6"},
      {"ocp.amplitude", "1"},
      {"ocp.frequencies", "4.0,4.3"},
      {"ocp.f_target", "0.3"},
      {"ocp.band_halfwidth", "0.25"},
      {"ocp.penalty_alpha", "6e-14"},
      {"ocp.sense", "maximize"},
      {"ocp.optimizer", "adamw"},
      {"ocp.lr", "2e-2"},
      {"ocp.max_iter", "100"},
      {"ocp.step_tol", "1e-9"},
      {"ocp.tau_max", "10"},
      {"ocp.p_max", "10"},
      {"ocp.a_max", "10"},
      {"ocp.zeta_max", "10"},
      {"ocp.f_max", "100"},
  };
  return table;
}

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.kv_ = default_table();
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!default_table().count(key))
    throw std::invalid_argument("RunConfig: unknown key '" + key + "'");
  kv_[key] = value;
}

RunConfig RunConfig::load(const std::string& path) {
  RunConfig c = defaults();
  std::ifstream f(path);
  if (!f) throw std::runtime_error("RunConfig: cannot open " + path);
  std::string line, section;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed section");
      section = lower(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = section + "." + lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (!default_table().count(key))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                               "'");
    c.kv_[key] = value;
  }

  // environment overrides THZ_<SECTION>_<KEY>
  for (char** e = environ; *e; ++e) {
    std::string ent(*e);
    if (ent.rfind("THZ_", 0) != 0) continue;
    const auto eq = ent.find('=');
    if (eq == std::string::npos) continue;
    std::string name = ent.substr(4, eq - 4);
    const auto us = name.find('_');
    if (us == std::string::npos) continue;
    std::string key = lower(name.substr(0, us)) + "." + lower(name.substr(us + 1));
    if (default_table().count(key)) c.kv_[key] = ent.substr(eq + 1);
  }
  return c;
}

double RunConfig::num(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw std::invalid_argument("RunConfig: unknown key '" + key + "'");
  size_t used = 0;
  const double v = std::stod(it->second, &used);
  if (used == 0) throw std::invalid_argument("RunConfig: key '" + key + "' is not numeric");
  return v;
}

int RunConfig::integer(const std::string& key) const {
  const double v = num(key);
  return static_cast<int>(std::llround(v));
}

std::string RunConfig::str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw std::invalid_argument("RunConfig: unknown key '" + key + "'");
  return it->second;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string v = lower(str(key));
  return v == "1" || v == "true" || v == "yes" || v == "on";
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << " = " << v << '\n';
  return os.str();
}

std::uint64_t RunConfig::hash() const {
  const std::string s = serialize();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace thz
