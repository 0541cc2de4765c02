#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "quadrl/dynamics.hpp"
#include "quadrl/env.hpp"
#include "quadrl/pid.hpp"
#include "quadrl/td3.hpp"
#include "quadrl/tracking.hpp"

namespace quadrl {

/// Bad configuration; `key()` is "section.name" or just the section.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct IoConfig {
  std::string output_dir = "runs/default";
  std::int64_t checkpoint_interval = 25'000;
};

/// Everything a run needs. Defaults reproduce the reference setup.
struct RunConfig {
  std::uint64_t seed = 0;
  QuadParams physics;
  EnvConfig env;
  RewardParams reward;
  Td3Config td3;
  PidGains pid = PidGains::defaults();
  TrackingConfig eval;
  int eval_episodes = 1;
  IoConfig io;

  /// Validates every section, rethrowing as ConfigError.
  void validate() const;
};

/// Sectioned key = value text. Missing sections and keys keep their defaults;
/// unknown sections or keys are rejected.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

/// Writes every key with round-trip precision; parse_config(write_config(c)) == c.
void write_config(const RunConfig& cfg, std::ostream& out);

}  // namespace quadrl
