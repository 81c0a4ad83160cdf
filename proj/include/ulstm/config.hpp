#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ulstm/metrics.hpp"
#include "ulstm/network.hpp"
#include "ulstm/training.hpp"

namespace ulstm {

// Flat `key = value` run configuration with `#` comments. Every key has a
// default; unknown keys and malformed values are rejected.
class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has_key(const std::string& key) const;

  void parse_text(const std::string& text, const std::string& origin = "<config>");
  void load_file(const std::filesystem::path& path);

  // Every key with its current value, in a fixed order.
  std::string resolved_text() const;
  void write_resolved(const std::filesystem::path& dir) const;  // dir/config.resolved

  NetworkConfig network() const;
  TrainConfig training() const;
  Connectivity connectivity() const;
  std::size_t repeats() const;

  static std::vector<std::string> keys();

 private:
  std::vector<std::pair<std::string, std::string>> values_;
};

}  // namespace ulstm
