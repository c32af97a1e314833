// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace thz {

/// Flat INI-style run configuration. Every key carries a documented default;
/// unknown keys are rejected. Values resolve in order: default, file, then
/// environment override THZ_<SECTION>_<KEY>.
class RunConfig {
 public:
  static RunConfig defaults();
  static RunConfig load(const std::string& path);

  double num(const std::string& key) const;
  int integer(const std::string& key) const;
  std::string str(const std::string& key) const;
  bool flag(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  /// All resolved key/value pairs, for provenance echoing into manifests.
  const std::map<std::string, std::string>& entries() const { return kv_; }
  std::string serialize() const;
  std::uint64_t hash() const;

  static const std::map<std::string, std::string>& default_table();

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace thz
