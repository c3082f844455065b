#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "experiment_config.hpp"

namespace symrep::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitDivergence = 3,
};

/// Options shared by every subcommand; unset values fall back to the config.
struct CommonOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
};

struct AnalyzeOptions {
  std::filesystem::path weights;
  AnalysisToggles flags;      // combined with the config's toggles
  bool proj_seeds_set = false;
};

struct BenchOptions {
  std::optional<int> seeds;
  std::optional<int> horizon;
  std::optional<int> trials;
};

inline constexpr const char* kWeightsFile = "weights.symr";
inline constexpr const char* kReportFile = "train_report.csv";
inline constexpr const char* kSnapshotFile = "config.resolved.json";
inline constexpr const char* kBenchFile = "rollout_error.csv";
inline constexpr const char* kBenchManifest = "bench_manifest.json";

// Each command prints diagnostics to `err` and returns an ExitCode.
int cmd_train(const CommonOptions& common, std::ostream& log, std::ostream& err);
int cmd_analyze(const CommonOptions& common, const AnalyzeOptions& options, std::ostream& log,
                std::ostream& err);
int cmd_predict_bench(const CommonOptions& common, const BenchOptions& options,
                      std::ostream& log, std::ostream& err);
int cmd_export_dataset(const CommonOptions& common, std::size_t count, std::ostream& log,
                       std::ostream& err);

/// Worker cap from SYMR_THREADS (default 1, minimum 1).
int worker_threads_from_env();

}  // namespace symrep::cli
