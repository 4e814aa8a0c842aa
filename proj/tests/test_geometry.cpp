#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "voxgrasp/error.hpp"
#include "voxgrasp/volume.hpp"

using namespace voxgrasp;

TEST_CASE("world/voxel round trip keeps grasps within 1e-9") {
  const GridFrame frame;
  Rng rng(11);
  double worst_t = 0.0, worst_r = 0.0, worst_w = 0.0;
  for (int n = 0; n < 10000; ++n) {
    Grasp g;
    const Vec3 vox(uniform(rng, 0, 40), uniform(rng, 0, 40), uniform(rng, 0, 40));
    g.pose.translation = frame.voxel_to_world(vox);
    g.pose.rotation = testing::random_quat(rng);
    g.width = uniform(rng, 0.0, 0.08);
    const Grasp back = voxel_to_world(frame, world_to_voxel(frame, g));
    worst_t = std::max(worst_t, (back.pose.translation - g.pose.translation).norm());
    worst_r = std::max(worst_r, back.pose.rotation.angularDistance(g.pose.rotation));
    worst_w = std::max(worst_w, std::abs(back.width - g.width));
  }
  CHECK(worst_t < 1e-9);
  CHECK(worst_r < 1e-9);
  CHECK(worst_w < 1e-9);
}

TEST_CASE("world_to_voxel scales by the voxel size and applies the volume offset") {
  const GridFrame frame;
  Grasp g;
  g.pose.translation = Vec3(0.15, 0.075, 0.0);
  g.width = 0.075;
  const VoxelGrasp v = world_to_voxel(frame, g);
  CHECK(v.position.x() == doctest::Approx(20.0));
  CHECK(v.position.y() == doctest::Approx(10.0));
  CHECK(v.position.z() == doctest::Approx(0.05 / 0.0075));
  CHECK(v.width == doctest::Approx(10.0));
}

TEST_CASE("grasp positions outside the workspace are rejected") {
  const GridFrame frame;
  Grasp g;
  g.pose.translation = Vec3(0.31, 0.1, 0.1);
  CHECK_THROWS_AS(world_to_voxel(frame, g), RangeError);
  g.pose.translation = Vec3(0.1, 0.1, -0.06);
  CHECK_THROWS_AS(world_to_voxel(frame, g), RangeError);
}

TEST_CASE("symmetry partner is a half turn about the approach axis") {
  Rng rng(5);
  for (int n = 0; n < 200; ++n) {
    const Quat r = testing::random_quat(rng);
    const Quat s = symmetry_partner(r);
    // same approach axis, flipped closing axis
    CHECK((s * Vec3::UnitZ() - r * Vec3::UnitZ()).norm() < 1e-12);
    CHECK((s * Vec3::UnitX() + r * Vec3::UnitX()).norm() < 1e-12);
    CHECK(quat_distance(symmetry_partner(s), r) < 1e-12);
  }
}

TEST_CASE("quat_distance ignores the double cover") {
  Rng rng(6);
  const Quat q = testing::random_quat(rng);
  const Quat neg(-q.w(), -q.x(), -q.y(), -q.z());
  CHECK(quat_distance(q, neg) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(quat_distance(Quat::Identity(), rotation_z(std::numbers::pi)) == doctest::Approx(1.0));
}

TEST_CASE("normalized rejects degenerate quaternions") {
  CHECK_THROWS_AS(normalized(Quat(0, 0, 0, 0)), InputError);
  CHECK_THROWS_AS(normalized(Quat(NAN, 0, 0, 1)), InputError);
}

TEST_CASE("gripper dimensions are validated") {
  GripperModel g;
  CHECK_NOTHROW(g.validate());
  g.max_width = 0.015;
  CHECK_THROWS_AS(g.validate(), InputError);
  g = {};
  g.finger_depth = 0.0;
  CHECK_THROWS_AS(g.validate(), InputError);
}
