#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "voxgrasp/geometry.hpp"
#include "voxgrasp/mesh.hpp"
#include "voxgrasp/rng.hpp"
#include "voxgrasp/scene.hpp"
#include "voxgrasp/volume.hpp"

namespace voxgrasp {

/// Left finger, right finger, palm, in that order. Throws RangeError unless
/// 0 <= width <= max_width.
std::array<Obb, 3> gripper_boxes(const GripperModel& gripper, const Pose& pose, double width);
std::vector<TriMesh> gripper_body_meshes(const GripperModel& gripper, const Pose& pose, double width);

/// True if a finger or the palm overlaps a scene object or reaches below the
/// support plane.
bool check_gripper_collision(const Scene& scene, const GripperModel& gripper, const Pose& pose,
                             double width);

enum class GraspLabel { success, collision, no_contact, slip };
const char* to_string(GraspLabel label);

struct Contact {
  Vec3 point;
  Vec3 normal;  // surface normal, facing the finger
};

struct GraspOutcome {
  GraspLabel label = GraspLabel::no_contact;
  double width_at_contact = 0.0;
  std::vector<Contact> contacts;
  /// The approach motion hit something before reaching the grasp pose.
  bool stopped_early = false;
  /// Index of the grasped object on success.
  std::size_t object = 0;
};

struct OracleConfig {
  GripperModel gripper;
  double friction = 0.5;
  /// Pre-grasp offset along -approach, in finger depths.
  double approach_distance = 1.0;
};

/// Quasi-static grasp trial: approach from the pre-grasp pose, check the hand
/// for collisions, close both fingers onto the scene and test the antipodal
/// friction-cone condition. Throws InputError for a non-finite pose and
/// RangeError for a width outside [0, max_width].
GraspOutcome evaluate_grasp(const Scene& scene, const Pose& pose, double width,
                            const OracleConfig& config);

struct GraspCandidate {
  Pose pose;
  double width = 0.0;
  std::size_t point = 0;  // index of the source surface point
  int orientation = 0;    // 0..5, rotation about the normal in 60 degree steps
  double offset = 0.0;    // depth below the surface along -normal
};

/// Six candidates per surface point: closing axis against the normal,
/// approach directions 60 degrees apart around it, the grasp center pushed
/// u ~ U(0, finger_depth) into the object, fully open.
std::vector<GraspCandidate> sample_candidates(std::span<const SurfacePoint> points,
                                              const GripperModel& gripper, Rng& rng);

/// Orientation `k` (0..5) for a surface normal; k = 0 approaches as close to
/// straight down as the normal allows.
Quat candidate_orientation(const Vec3& normal, int k);

}  // namespace voxgrasp
