#pragma once

// On-disk trajectory datasets: one CSV per trajectory with header
// `step,action_id,axis,angle,obs_0,...` (unused action fields left empty,
// the final row carries no action) plus a `metadata.json` sidecar holding
// the environment, seed and per-trajectory start states.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "symrep/environments.hpp"

namespace symrep::env {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  EnvironmentSpec environment;
  std::uint64_t seed = 0;
  int rollout_length = 0;
  std::vector<Trajectory> trajectories;
};

inline constexpr const char* kMetadataFile = "metadata.json";

void write_trajectory_csv(const Trajectory& trajectory, const std::filesystem::path& path);
/// Reads observations and actions; the start state is left default.
Trajectory read_trajectory_csv(const std::filesystem::path& path);

/// `count` trajectories of length m, trajectory k seeded by derive_seed(seed, k).
Dataset generate_dataset(const EnvironmentSpec& spec, std::uint64_t seed, int m,
                         std::size_t count);

void export_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset import_dataset(const std::filesystem::path& dir);

}  // namespace symrep::env
