#include "voxgrasp/geometry.hpp"

#include <cmath>

#include "voxgrasp/error.hpp"

namespace voxgrasp {

Quat rotation_z(double angle) { return Quat(std::cos(angle / 2), 0, 0, std::sin(angle / 2)); }

Quat axis_angle(const Vec3& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

Quat normalized(const Quat& q) {
  const double n = q.norm();
  if (!std::isfinite(n) || n == 0.0) throw InputError("quaternion has zero or non-finite norm");
  return Quat(q.w() / n, q.x() / n, q.y() / n, q.z() / n);
}

Quat symmetry_partner(const Quat& r) {
  const Quat u = normalized(r);
  // r * (0, 0, 0, 1), expanded so the result is exact.
  return Quat(-u.z(), u.y(), -u.x(), u.w());
}

double quat_distance(const Quat& a, const Quat& b) {
  return 1.0 - std::abs(a.coeffs().dot(b.coeffs()));
}

Quat quat_from_axes(const Vec3& x, const Vec3& y, const Vec3& z) {
  Mat3 m;
  m.col(0) = x;
  m.col(1) = y;
  m.col(2) = z;
  return Quat(m).normalized();
}

Vec3 any_orthogonal(const Vec3& v) {
  const Vec3 ref = std::abs(v.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return v.cross(ref).normalized();
}

void GripperModel::validate() const {
  if (!(max_width > 0 && finger_depth > 0 && finger_thickness > 0 && palm_depth > 0))
    throw InputError("gripper dimensions must be strictly positive");
  if (!(max_width > 2.0 * finger_thickness))
    throw InputError("gripper max_width must exceed twice the finger thickness");
}

}  // namespace voxgrasp
