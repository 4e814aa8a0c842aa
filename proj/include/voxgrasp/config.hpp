#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "voxgrasp/bench.hpp"
#include "voxgrasp/dataset.hpp"
#include "voxgrasp/neural.hpp"

namespace voxgrasp {

inline constexpr int kConfigVersion = 1;

/// Every tunable of the pipeline. Loaded from JSON; absent keys keep their
/// defaults, unknown keys are rejected.
struct Config {
  std::uint64_t seed = 0;

  GridFrame frame;
  double truncation_voxels = 4.0;
  GripperModel gripper;
  double friction = 0.5;
  double approach_distance = 1.0;

  std::uint64_t scenes = 2000;
  std::size_t points_per_scene = 90;
  double pile_fraction = 0.5;
  int max_views = 6;
  std::size_t pool_size = 100;

  nn::ModelConfig model;
  nn::TrainConfig train;

  DetectionConfig detection;

  Scenario scenario = Scenario::blocks_pile;
  int m = 5;
  int rounds = 50;
  Policy policy = Policy::random_above_eps;

  /// Throws InputError naming the offending key.
  void validate() const;

  DatasetConfig dataset_config() const;
  BenchConfig bench_config() const;
  OracleConfig oracle_config() const;
  nn::TrainConfig train_config() const;  // carries the master seed
};

/// Throws InputError on malformed JSON, a wrong or missing config_version,
/// unknown keys or invalid values.
Config config_from_json(const std::string& text);
Config load_config(const std::filesystem::path& path);
/// Canonical JSON (sorted keys, fixed layout); the hash input.
std::string config_to_json(const Config& config);
std::string config_hash(const Config& config);

}  // namespace voxgrasp
