#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxgrasp/mesh.hpp"
#include "voxgrasp/rng.hpp"
#include "voxgrasp/volume.hpp"

namespace voxgrasp {

enum class PrimitiveKind { box, cylinder, sphere, mug, l_block };

const char* to_string(PrimitiveKind kind);
/// Throws InputError for an unknown name.
PrimitiveKind primitive_kind_from_string(const std::string& name);

/// Procedural object. Meaning of `dims` (meters) per kind:
///   box:      full side lengths x, y, z
///   cylinder: radius, height, -
///   sphere:   radius, -, -
///   mug:      base radius, top radius, height (two stacked cylinders)
///   l_block:  leg length, leg thickness, height
struct PrimitiveSpec {
  PrimitiveKind kind = PrimitiveKind::box;
  std::array<double, 3> dims{0.04, 0.04, 0.04};

  /// Watertight mesh in the object frame (object z axis = "up" when upright,
  /// bounding box centered on the origin).
  TriMesh mesh() const;
  /// Extent along the object z axis and the largest extent across it.
  double height() const;
  double lateral_extent() const;
  /// Smallest extent across the object z axis.
  double min_lateral_extent() const;
  /// Height above 1.5 x lateral extent; only these are used for packed scenes.
  bool is_tall() const { return height() > 1.5 * lateral_extent(); }
  void validate() const;
};

enum class PoolSplit { train, test, blocks };

/// `count` randomly dimensioned primitives. Train and test pools come from
/// disjoint seed streams; `blocks` holds boxes only (the benchmark's
/// block scenario).
std::vector<PrimitiveSpec> make_object_pool(PoolSplit split, std::size_t count, std::uint64_t seed);

struct PlacedObject {
  PrimitiveSpec spec;
  Pose pose;  // object -> world
  double scale = 1.0;
};

enum class SceneKind { pile, packed };

/// Objects resting on the support plane z = support_z (0 for generated
/// scenes) of a workspace of side `length` whose footprint is [0, length]^2
/// in world x, y.
struct SceneDescription {
  SceneKind kind = SceneKind::pile;
  double length = 0.30;
  double support_z = 0.0;
  std::uint64_t seed = 0;
  std::vector<PlacedObject> objects;
};

/// Scene with object meshes baked into the world frame.
class Scene {
 public:
  Scene() = default;
  explicit Scene(SceneDescription description);

  const SceneDescription& description() const { return description_; }
  const std::vector<TriMesh>& meshes() const { return meshes_; }
  std::size_t object_count() const { return meshes_.size(); }
  double support_z() const { return description_.support_z; }
  std::vector<const TriMesh*> mesh_pointers() const;
  void remove_object(std::size_t index);

 private:
  SceneDescription description_;
  std::vector<TriMesh> meshes_;
};

struct PileConfig {
  double footprint = 0.15;     // side of the square drop region, centered in the workspace
  int attempts_per_object = 50;
  double poisson_mean = 4.0;   // object count m ~ Pois(mean) + 1
};

struct PackedConfig {
  double margin = 0.08;  // placement region [margin, length - margin]^2
  int attempts_per_object = 12;
  double poisson_mean = 4.0;
};

/// Drop objects one by one; `object_count` < 0 draws m ~ Pois(mean) + 1.
/// Objects that cannot be placed within the attempt budget are skipped.
SceneDescription generate_pile(Rng& rng, const std::vector<PrimitiveSpec>& pool, double length,
                               const PileConfig& config = {}, int object_count = -1);
/// Upright placement with collision rejection; uses the tall pool members.
SceneDescription generate_packed(Rng& rng, const std::vector<PrimitiveSpec>& pool, double length,
                                 const PackedConfig& config = {}, int object_count = -1);

/// Camera on a sphere around `target`: r from target, polar angle theta from
/// world +z, azimuth phi.
struct ViewpointSample {
  double r = 0.6;
  double theta = 0.0;
  double phi = 0.0;
  Vec3 target = Vec3::Zero();

  Pose camera_pose() const;
};

ViewpointSample sample_viewpoint(Rng& rng, double length, const Vec3& target);

/// Ray-traced z-depth of the objects and the infinite support plane.
DepthImage render_depth(const Scene& scene, const Pose& camera_to_world,
                        const CameraIntrinsics& intrinsics = {});

/// Fuse `images` into a fresh volume; truncation 0 means four voxels.
TsdfVolume fuse(const GridFrame& frame, const std::vector<DepthImage>& images, double truncation = 0.0);

std::string scene_to_json(const SceneDescription& scene);
/// Throws FormatError on malformed input.
SceneDescription scene_from_json(const std::string& text);

}  // namespace voxgrasp
