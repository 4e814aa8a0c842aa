#pragma once

#include <array>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxgrasp/geometry.hpp"

namespace voxgrasp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Aabb {
  Vec3 lo = Vec3::Constant(kInfinity);
  Vec3 hi = Vec3::Constant(-kInfinity);

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool empty() const { return (lo.array() > hi.array()).any(); }
  bool overlaps(const Aabb& b) const {
    return (lo.array() <= b.hi.array()).all() && (b.lo.array() <= hi.array()).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  /// Slab test; on success `t_enter` is the entry distance (clamped at 0).
  bool intersect_ray(const Vec3& origin, const Vec3& inv_dir, double t_max, double& t_enter) const;
};

/// Oriented box given by its frame (center + axes) and half extents.
struct Obb {
  Pose frame;
  Vec3 half_extents = Vec3::Zero();

  Aabb bounds() const;
  bool contains(const Vec3& p, double tolerance = 0.0) const;
  std::array<Vec3, 8> corners() const;
};

struct RayHit {
  double distance = 0.0;
  /// Unit normal, flipped to face the ray origin.
  Vec3 normal = Vec3::Zero();
  std::size_t mesh = 0;
  std::size_t triangle = 0;
};

/// Indexed triangle mesh with a bounding-volume hierarchy over its triangles.
/// Immutable once built; all queries are const and thread-safe.
class TriMesh {
 public:
  using Triangle = std::array<int, 3>;

  TriMesh() = default;
  /// Throws RangeError if a triangle references a missing vertex.
  TriMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const Aabb& bounds() const { return bounds_; }
  std::size_t triangle_count() const { return triangles_.size(); }
  bool empty() const { return triangles_.empty(); }

  TriMesh transformed(const Pose& pose) const;

  /// Nearest hit with distance in (0, t_max].
  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& dir,
                                  double t_max = kInfinity) const;
  /// Reference implementation that tests every triangle.
  std::optional<RayHit> intersect_brute_force(const Vec3& origin, const Vec3& dir,
                                              double t_max = kInfinity) const;

  /// Point-in-solid by ray parity; only meaningful for watertight meshes.
  bool contains(const Vec3& p) const;
  /// Every undirected edge is shared by exactly two triangles.
  bool is_watertight() const;
  double volume() const;
  /// Center of mass of the enclosed solid (uniform density).
  Vec3 centroid() const;

  /// True if any triangle touches the box (surface test only).
  bool surface_overlaps(const Obb& box) const;
  /// True if the two surfaces cross (surface test only).
  bool surface_intersects(const TriMesh& other) const;

 private:
  struct Node {
    Aabb box;
    int left = -1;
    int right = -1;
    int first = 0;
    int count = 0;
    bool leaf() const { return left < 0; }
  };

  int build_node(int first, int count, const std::vector<Vec3>& centroids,
                 const std::vector<Aabb>& tri_boxes);
  void build_bvh();
  int count_crossings(const Vec3& origin, const Vec3& dir) const;
  bool triangle_hit(int tri, const Vec3& origin, const Vec3& dir, double t_max,
                    double& t) const;

  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  Aabb bounds_;
};

/// Nearest positive-distance hit over a set of posed meshes.
std::optional<RayHit> ray_cast(std::span<const TriMesh* const> meshes, const Vec3& origin,
                               const Vec3& dir, double t_max = kInfinity);

/// Solid-vs-solid overlap: crossing surfaces or one solid inside the other.
bool solids_intersect(const TriMesh& a, const TriMesh& b);
/// Box-vs-solid overlap, including full containment either way.
bool box_intersects_solid(const Obb& box, const TriMesh& solid);

// Exact geometric predicates, exposed for tests.
bool triangle_box_overlap(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& half_extents);
bool triangles_intersect(const std::array<Vec3, 3>& t0, const std::array<Vec3, 3>& t1);
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Watertight primitive generators; all centered on the origin unless noted.
TriMesh make_box_mesh(const Vec3& half_extents);
TriMesh make_box_mesh(const Obb& box);
/// UV sphere with poles on the z axis (a vertex sits at (0, 0, -radius)).
TriMesh make_uv_sphere(double radius, int rings = 12, int segments = 24);
TriMesh make_icosphere(double radius, int subdivisions = 3);
/// Surface of revolution around z. `profile` lists (radius, z) pairs from
/// bottom to top; the first and last rings are capped.
TriMesh make_lathe(const std::vector<std::array<double, 2>>& profile, int segments = 24);
TriMesh make_cylinder(double radius, double height, int segments = 24);
/// Prism from a counter-clockwise simple polygon in the xy plane, z in
/// [-height/2, height/2]. The polygon is fan-triangulated from `fan_center`.
TriMesh make_extrusion(const std::vector<std::array<double, 2>>& polygon, double height,
                       std::array<double, 2> fan_center);

void write_off(std::ostream& out, const TriMesh& mesh);
TriMesh read_off(std::istream& in);

}  // namespace voxgrasp
