#pragma once

// JSON experiment configuration. Parsing is strict: unknown keys are
// rejected and every error names the offending field.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symrep/training.hpp"

namespace symrep::cli {

struct AnalysisToggles {
  bool group_report = false;
  bool equivariance = false;
  bool atlas = false;
  bool project_2d = false;
  int proj_seeds = 1;
  bool angle_sweep = false;
  bool dimension_usage = false;

  bool any() const {
    return group_report || equivariance || atlas || project_2d || angle_sweep || dimension_usage;
  }
  friend bool operator==(const AnalysisToggles&, const AnalysisToggles&) = default;
};

struct BenchSettings {
  int horizon = 10;
  int trials = 100;
  friend bool operator==(const BenchSettings&, const BenchSettings&) = default;
};

struct ExperimentConfig {
  train::TrainConfig train;
  std::filesystem::path output_dir = "out";
  AnalysisToggles analyses;
  /// Training seeds for predict-bench; empty means 0..N-1.
  std::vector<std::uint64_t> seeds;
  BenchSettings bench;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
/// Reads and parses; ConfigurationError on unreadable files or bad JSON.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every field with defaults materialized; parse_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& config);
void write_config_snapshot(const ExperimentConfig& config, const std::filesystem::path& path);

}  // namespace symrep::cli
