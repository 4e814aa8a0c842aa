#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "voxgrasp/oracle.hpp"
#include "voxgrasp/scene.hpp"
#include "voxgrasp/volume.hpp"

namespace voxgrasp {

/// One labeled grasp in voxel coordinates of its scene's volume.
struct GraspRecord {
  std::uint64_t scene_id = 0;
  std::array<float, 3> position{};  // continuous voxel coordinates
  std::array<float, 4> rotation{1, 0, 0, 0};  // w, x, y, z in the volume frame
  float width = 0.0f;  // voxel units
  std::uint8_t label = 0;

  Quat quat() const { return Quat(rotation[0], rotation[1], rotation[2], rotation[3]); }
  /// Integer voxel the record trains (floor of the position).
  std::array<int, 3> voxel() const;
  bool operator==(const GraspRecord&) const = default;
};

struct DatasetConfig {
  GridFrame frame;
  double truncation = 0.0;  // 0: four voxels
  OracleConfig oracle;
  CameraIntrinsics camera;
  PileConfig pile;
  PackedConfig packed;
  std::size_t points_per_scene = 120;
  double pile_fraction = 0.5;
  int max_views = 6;
  std::size_t pool_size = 100;
};

/// Everything produced for one scene before balancing.
struct SceneSample {
  std::uint64_t scene_id = 0;
  SceneDescription scene;
  TsdfVolume volume;
  std::vector<GraspRecord> records;
  int views = 0;
};

/// Generate, render, fuse and label scene `scene_id`. Each surface point
/// becomes one record: positive if any of its six orientations succeeds, in
/// which case the middle orientation of the longest run of successes and its
/// contact width are stored. Points whose grasp center falls outside the
/// workspace or on a voxel rejected by grasp_admissible are dropped.
SceneSample generate_scene_sample(std::uint64_t seed, std::uint64_t scene_id,
                                  const DatasetConfig& config,
                                  const std::vector<PrimitiveSpec>& pool);

struct DatasetManifest {
  std::uint64_t count = 0;
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
  std::uint64_t scenes = 0;
  std::uint64_t skipped_scenes = 0;
  int resolution = 0;
  double length = 0.0;
  std::string gripper_hash;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t points_per_scene = 0;
};

/// Randomly drops records of the majority class (seeded) until both classes
/// have the same size; relative order of the kept records is preserved.
std::vector<GraspRecord> balance(const std::vector<GraspRecord>& records, std::uint64_t seed);

/// Callback receiving each scene in scene-id order.
using SceneSink = std::function<void(const SceneSample&)>;

struct DatasetBuild {
  std::vector<GraspRecord> records;  // balanced
  DatasetManifest manifest;
};

/// Deterministic in (seed, config) regardless of the thread count. Scenes
/// are generated in parallel and handed to `sink` in order.
DatasetBuild build_dataset(std::uint64_t seed, std::uint64_t scene_count, const DatasetConfig& config,
                           const SceneSink& sink = {});

/// 90 degree yaw steps about the vertical grid axis plus an integer z shift.
struct Augmentation {
  int quarter_turns = 0;
  int z_shift = 0;
};

/// Applies `aug` to a raw N^3 grid (x fastest); vacated voxels become 0.
std::vector<float> augment_grid(const std::vector<float>& grid, int n, const Augmentation& aug);
GraspRecord augment_record(const GraspRecord& record, int n, const Augmentation& aug);
/// Draws k uniform in 0..3 and a shift in [-n/8, n/8], redrawing the shift
/// until every position stays inside the grid (falls back to 0).
Augmentation sample_augmentation(Rng& rng, int n, const std::vector<GraspRecord>& records);
/// Augments a record and its volume together.
std::pair<GraspRecord, TsdfVolume> augment(const GraspRecord& record, const TsdfVolume& volume,
                                           Rng& rng);

/// 18 bins of 10 degrees over [0, 180]: angle between gravity (world -z) and
/// the grasp approach axis, positives only. Throws InputError without
/// positives.
std::array<std::uint64_t, 18> grasp_angle_histogram(const std::vector<GraspRecord>& records,
                                                    const GridFrame& frame);

void write_records(const std::filesystem::path& path, const std::vector<GraspRecord>& records);
std::vector<GraspRecord> read_records(const std::filesystem::path& path);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

/// Stable 64-bit FNV-1a digest, rendered as 16 hex digits.
std::string digest_hex(std::string_view bytes);
std::string gripper_hash(const GripperModel& gripper);

/// Layout of a dataset directory.
struct DatasetPaths {
  std::filesystem::path root;
  std::filesystem::path records() const { return root / "records.bin"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path histogram() const { return root / "angle_histogram.csv"; }
  std::filesystem::path volume(std::uint64_t scene_id) const;
  std::filesystem::path scene(std::uint64_t scene_id) const;
};

}  // namespace voxgrasp
