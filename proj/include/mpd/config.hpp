#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpd/objectives.hpp"
#include "mpd/policies.hpp"

namespace mpd {

struct ObjectiveSpec {
  std::string kind = "rff";  // rff | analytic | external
  int dim = 0;
  Sense sense = Sense::kMinimize;
  double noise_std = 0.0;
  Box box;

  // rff
  double lengthscale = 0.0;  // 0 selects 0.1 sqrt(dim)
  double outputscale = 1.0;
  int features = 1024;
  std::uint64_t seed = 0;
  /// Draw a different sample for every run (seed + run index).
  bool resample_per_run = true;

  // analytic
  std::string name;

  // external
  std::vector<std::string> command;
  double timeout = 60.0;

  std::string label() const;
};

/// Builds the objective used by run `run` of an experiment.
std::unique_ptr<Objective> make_objective(const ObjectiveSpec& spec, int run);

struct NamedPolicy {
  std::string name;
  PolicyConfig config;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ObjectiveSpec objective;
  std::vector<NamedPolicy> policies;
  int budget = 500;
  int runs = 10;
  std::uint64_t seed = 0;
  std::string output_dir = "results";
  /// 0 selects the number of available cores.
  int parallel = 0;

  void validate() const;
};

enum class ConfigFormat { kToml, kJson };

/// Parses, fills defaults and validates. Unknown keys, type mismatches and
/// out-of-range values raise ConfigError naming the field; syntax errors
/// report line and column.
ExperimentConfig parse_config(const std::string& text, ConfigFormat format);

/// Format chosen by extension (.json, otherwise TOML).
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON with every default made explicit; parse_config of its dump
/// reproduces the same configuration.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// 64-bit FNV-1a of the canonical JSON without output_dir and parallel, as hex.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace mpd
