#pragma once

#include <Eigen/Geometry>

namespace voxgrasp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
/// Hamilton quaternion; serialized in (w, x, y, z) order everywhere.
using Quat = Eigen::Quaterniond;

/// Rigid transform: p -> rotation * p + translation.
struct Pose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {Quat::Identity(), t}; }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  Pose operator*(const Pose& other) const {
    return {(rotation * other.rotation).normalized(), rotation * other.translation + translation};
  }
  Pose inverse() const {
    const Quat inv = rotation.conjugate();
    return {inv, -(inv * translation)};
  }
  Mat3 matrix() const { return rotation.toRotationMatrix(); }
  Vec3 apply_direction(const Vec3& d) const { return rotation * d; }
};

Quat rotation_z(double angle);
Quat axis_angle(const Vec3& axis, double angle);

/// Normalizes `q`; zero or non-finite input is rejected with InputError.
Quat normalized(const Quat& q);

/// Orientation of the same parallel-jaw grasp after a half turn about the
/// gripper's approach (z) axis: r * Rz(pi). Non-unit input is normalized.
Quat symmetry_partner(const Quat& r);

/// 1 - |a . b|; zero iff a and b describe the same rotation.
double quat_distance(const Quat& a, const Quat& b);

/// Build a rotation whose columns are the given (orthonormal) axes.
Quat quat_from_axes(const Vec3& x, const Vec3& y, const Vec3& z);

/// Any unit vector orthogonal to `v`.
Vec3 any_orthogonal(const Vec3& v);

/// Parallel-jaw gripper dimensions.
///
/// Grasp frame: origin midway between the fingertips, +x is the closing axis,
/// +z the approach direction (the hand travels along +z to reach the grasp),
/// so the fingers occupy z in [-finger_depth, 0] and the palm sits behind them.
struct GripperModel {
  double max_width = 0.08;
  double finger_depth = 0.05;
  double finger_thickness = 0.01;
  double palm_depth = 0.02;

  /// Throws InputError unless every dimension is positive and
  /// max_width > 2 * finger_thickness.
  void validate() const;
  /// Extent of a finger along the grasp y axis.
  double finger_width() const { return 2.0 * finger_thickness; }
};

}  // namespace voxgrasp
