#include "voxgrasp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "voxgrasp/error.hpp"

namespace voxgrasp {

namespace {

// Contact rays along each finger, as fractions of the finger depth measured
// from the fingertip.
constexpr std::array<double, 5> kRayFractions{0.05, 0.275, 0.5, 0.725, 0.95};

bool finite_pose(const Pose& p) {
  return p.translation.allFinite() && p.rotation.coeffs().allFinite() && p.rotation.norm() > 0.5;
}

bool box_hits_scene(const Scene& scene, const Obb& box) {
  for (const Vec3& c : box.corners())
    if (c.z() < scene.support_z()) return true;
  for (const auto& mesh : scene.meshes())
    if (box_intersects_solid(box, mesh)) return true;
  return false;
}

bool any_box_hits(const Scene& scene, const std::array<Obb, 3>& boxes) {
  return std::any_of(boxes.begin(), boxes.end(), [&](const Obb& b) { return box_hits_scene(scene, b); });
}

// Boxes covering the hand on its way from `distance` behind the pose to it.
std::array<Obb, 3> swept_boxes(const std::array<Obb, 3>& at_grasp, double distance) {
  std::array<Obb, 3> out = at_grasp;
  for (auto& b : out) {
    b.half_extents.z() += distance / 2;
    b.frame.translation -= b.frame.apply_direction(Vec3(0, 0, distance / 2));
  }
  return out;
}

struct FingerHit {
  double travel;
  RayHit hit;
  Vec3 point;
};

// First contact of one finger closing along `dir` from its inner face.
std::optional<FingerHit> close_finger(const std::vector<const TriMesh*>& meshes,
                                      const Pose& pose, const GripperModel& g, double face_x,
                                      const Vec3& dir_local, double range) {
  std::optional<FingerHit> best;
  const Vec3 dir = pose.apply_direction(dir_local);
  for (double f : kRayFractions) {
    const Vec3 origin = pose * Vec3(face_x, 0.0, -f * g.finger_depth);
    if (auto hit = ray_cast(meshes, origin, dir, range)) {
      if (!best || hit->distance < best->travel)
        best = FingerHit{hit->distance, *hit, origin + hit->distance * dir};
    }
  }
  return best;
}

}  // namespace

std::array<Obb, 3> gripper_boxes(const GripperModel& g, const Pose& pose, double width) {
  if (!(width >= 0.0 && width <= g.max_width))
    throw RangeError("gripper width " + std::to_string(width) + " outside [0, " +
                     std::to_string(g.max_width) + "]");
  const double th = g.finger_thickness, fd = g.finger_depth;
  const Vec3 finger_half(th / 2, g.finger_width() / 2, fd / 2);
  const Vec3 palm_half(g.max_width / 2 + th, g.finger_width() / 2, g.palm_depth / 2);
  auto place = [&](const Vec3& center, const Vec3& half) {
    return Obb{{pose.rotation, pose * center}, half};
  };
  return {place(Vec3(-(width / 2 + th / 2), 0, -fd / 2), finger_half),
          place(Vec3(width / 2 + th / 2, 0, -fd / 2), finger_half),
          place(Vec3(0, 0, -fd - g.palm_depth / 2), palm_half)};
}

std::vector<TriMesh> gripper_body_meshes(const GripperModel& g, const Pose& pose, double width) {
  std::vector<TriMesh> out;
  for (const Obb& b : gripper_boxes(g, pose, width)) out.push_back(make_box_mesh(b));
  return out;
}

bool check_gripper_collision(const Scene& scene, const GripperModel& g, const Pose& pose, double width) {
  return any_box_hits(scene, gripper_boxes(g, pose, width));
}

const char* to_string(GraspLabel label) {
  switch (label) {
    case GraspLabel::success: return "success";
    case GraspLabel::collision: return "collision";
    case GraspLabel::no_contact: return "no_contact";
    case GraspLabel::slip: return "slip";
  }
  return "?";
}

GraspOutcome evaluate_grasp(const Scene& scene, const Pose& pose_in, double width,
                            const OracleConfig& config) {
  if (!finite_pose(pose_in)) throw InputError("grasp pose is not finite");
  const Pose pose{pose_in.rotation.normalized(), pose_in.translation};
  const GripperModel& g = config.gripper;
  const auto boxes = gripper_boxes(g, pose, width);

  GraspOutcome out;
  const double back = config.approach_distance * g.finger_depth;
  const Pose pre{pose.rotation, pose * Vec3(0, 0, -back)};
  if (any_box_hits(scene, gripper_boxes(g, pre, width))) {
    out.label = GraspLabel::collision;
    return out;
  }
  if (any_box_hits(scene, swept_boxes(boxes, back))) {
    out.label = GraspLabel::collision;
    out.stopped_early = true;
    return out;
  }

  const auto meshes = scene.mesh_pointers();
  const auto left = close_finger(meshes, pose, g, -width / 2, Vec3::UnitX(), width);
  const auto right = close_finger(meshes, pose, g, width / 2, -Vec3::UnitX(), width);
  if (!left || !right) {
    out.label = GraspLabel::no_contact;
    return out;
  }
  const double x_left = -width / 2 + left->travel;
  const double x_right = width / 2 - right->travel;
  out.contacts = {{left->point, left->hit.normal}, {right->point, right->hit.normal}};
  out.width_at_contact = std::clamp(x_right - x_left, 0.0, g.max_width);
  if (!(x_left < x_right) || left->hit.mesh != right->hit.mesh) {
    out.label = GraspLabel::slip;
    return out;
  }
  // The finger pushes along its closing direction; the surface normal faces
  // the finger, so the pushing force must lie within the cone about -normal.
  const double cos_limit = std::cos(std::atan(config.friction));
  const Vec3 closing = pose.apply_direction(Vec3::UnitX());
  const bool left_ok = (-left->hit.normal).dot(closing) >= cos_limit;
  const bool right_ok = (-right->hit.normal).dot(-closing) >= cos_limit;
  if (!left_ok || !right_ok) {
    out.label = GraspLabel::slip;
    return out;
  }
  out.label = GraspLabel::success;
  out.object = left->hit.mesh;
  return out;
}

Quat candidate_orientation(const Vec3& normal, int k) {
  const Vec3 n = normal.normalized();
  const Vec3 x = -n;
  Vec3 ref = Vec3(0, 0, -1) - Vec3(0, 0, -1).dot(n) * n;
  if (ref.norm() < 1e-6) ref = Vec3::UnitX() - Vec3::UnitX().dot(n) * n;
  ref.normalize();
  const Vec3 z = Eigen::AngleAxisd(k * std::numbers::pi / 3.0, n) * ref;
  const Vec3 y = z.cross(x);
  return quat_from_axes(x, y, z);
}

std::vector<GraspCandidate> sample_candidates(std::span<const SurfacePoint> points,
                                              const GripperModel& gripper, Rng& rng) {
  std::vector<GraspCandidate> out;
  out.reserve(points.size() * 6);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double u = uniform(rng, 0.0, gripper.finger_depth);
    const Vec3 n = points[i].normal.normalized();
    const Vec3 position = points[i].point - u * n;
    for (int k = 0; k < 6; ++k)
      out.push_back({{candidate_orientation(n, k), position}, gripper.max_width, i, k, u});
  }
  return out;
}

}  // namespace voxgrasp
