#include "voxgrasp/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <utility>

#include "voxgrasp/error.hpp"

namespace voxgrasp {

namespace {

constexpr int kLeafSize = 4;
constexpr double kRayEpsilon = 1e-12;

bool ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                  const Vec3& c, double& t) {
  // Moller-Trumbore.
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-300) return false;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  t = e2.dot(q) * inv;
  return t > kRayEpsilon;
}

Vec3 facing_normal(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& dir) {
  Vec3 n = (b - a).cross(c - a).normalized();
  if (n.dot(dir) > 0) n = -n;
  return n;
}

bool segment_triangle(const Vec3& p, const Vec3& q, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 d = q - p;
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 h = d.cross(e2);
  const double det = e1.dot(h);
  if (std::abs(det) < 1e-300) return false;
  const double inv = 1.0 / det;
  const Vec3 s = p - a;
  const double u = s.dot(h) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 r = s.cross(e1);
  const double v = d.dot(r) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = e2.dot(r) * inv;
  return t >= 0.0 && t <= 1.0;
}

// Separating-axis test of interval projections.
bool separated(const Vec3& axis, const Vec3& v0, const Vec3& v1, const Vec3& v2, const Vec3& h) {
  const double p0 = axis.dot(v0), p1 = axis.dot(v1), p2 = axis.dot(v2);
  const double r = h.x() * std::abs(axis.x()) + h.y() * std::abs(axis.y()) + h.z() * std::abs(axis.z());
  return std::max({p0, p1, p2}) < -r || std::min({p0, p1, p2}) > r;
}

}  // namespace

bool Aabb::intersect_ray(const Vec3& origin, const Vec3& inv_dir, double t_max,
                         double& t_enter) const {
  double t0 = 0.0, t1 = t_max;
  for (int k = 0; k < 3; ++k) {
    double a = (lo[k] - origin[k]) * inv_dir[k];
    double b = (hi[k] - origin[k]) * inv_dir[k];
    if (std::isnan(a) || std::isnan(b)) {
      // Ray parallel to and lying in the slab boundary.
      if (origin[k] < lo[k] || origin[k] > hi[k]) return false;
      continue;
    }
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return false;
  }
  t_enter = t0;
  return true;
}

Aabb Obb::bounds() const {
  const Mat3 r = frame.matrix();
  const Vec3 ext = r.cwiseAbs() * half_extents;
  return {frame.translation - ext, frame.translation + ext};
}

bool Obb::contains(const Vec3& p, double tolerance) const {
  const Vec3 local = frame.rotation.conjugate() * (p - frame.translation);
  return (local.cwiseAbs().array() <= half_extents.array() + tolerance).all();
}

std::array<Vec3, 8> Obb::corners() const {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const Vec3 s((i & 1) ? 1 : -1, (i & 2) ? 1 : -1, (i & 4) ? 1 : -1);
    out[i] = frame * Vec3(s.cwiseProduct(half_extents));
  }
  return out;
}

TriMesh::TriMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  const int n = static_cast<int>(vertices_.size());
  for (const auto& t : triangles_)
    for (int i : t)
      if (i < 0 || i >= n) throw RangeError("triangle index out of range");
  for (const auto& v : vertices_) bounds_.extend(v);
  build_bvh();
}

void TriMesh::build_bvh() {
  const int n = static_cast<int>(triangles_.size());
  nodes_.clear();
  order_.resize(n);
  if (n == 0) return;
  std::vector<Vec3> centroids(n);
  std::vector<Aabb> boxes(n);
  for (int i = 0; i < n; ++i) {
    order_[i] = i;
    for (int k : triangles_[i]) boxes[i].extend(vertices_[k]);
    centroids[i] = boxes[i].center();
  }
  nodes_.reserve(2 * n);
  build_node(0, n, centroids, boxes);
}

int TriMesh::build_node(int first, int count, const std::vector<Vec3>& centroids,
                        const std::vector<Aabb>& tri_boxes) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Aabb box, cbox;
  for (int i = first; i < first + count; ++i) {
    box.extend(tri_boxes[order_[i]]);
    cbox.extend(centroids[order_[i]]);
  }
  nodes_[index].box = box;
  if (count <= kLeafSize) {
    nodes_[index].first = first;
    nodes_[index].count = count;
    return index;
  }
  int axis = 0;
  const Vec3 ext = cbox.extent();
  if (ext.y() > ext[axis]) axis = 1;
  if (ext.z() > ext[axis]) axis = 2;
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](int a, int b) {
                     if (centroids[a][axis] != centroids[b][axis])
                       return centroids[a][axis] < centroids[b][axis];
                     return a < b;
                   });
  const int left = build_node(first, mid - first, centroids, tri_boxes);
  const int right = build_node(mid, first + count - mid, centroids, tri_boxes);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

TriMesh TriMesh::transformed(const Pose& pose) const {
  std::vector<Vec3> v(vertices_.size());
  const Mat3 r = pose.matrix();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = r * vertices_[i] + pose.translation;
  return TriMesh(std::move(v), triangles_);
}

bool TriMesh::triangle_hit(int tri, const Vec3& origin, const Vec3& dir, double t_max,
                           double& t) const {
  const auto& f = triangles_[tri];
  return ray_triangle(origin, dir, vertices_[f[0]], vertices_[f[1]], vertices_[f[2]], t) &&
         t <= t_max;
}

std::optional<RayHit> TriMesh::intersect(const Vec3& origin, const Vec3& dir,
                                         double t_max) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv = dir.cwiseInverse();
  double best = t_max;
  int best_tri = -1;
  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    double t_enter;
    if (!node.box.intersect_ray(origin, inv, best, t_enter)) continue;
    if (node.leaf()) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        double t;
        const int tri = order_[i];
        if (triangle_hit(tri, origin, dir, best, t) &&
            (t < best || (t == best && (best_tri < 0 || tri < best_tri)))) {
          best = t;
          best_tri = tri;
        }
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  if (best_tri < 0) return std::nullopt;
  const auto& f = triangles_[best_tri];
  return RayHit{best, facing_normal(vertices_[f[0]], vertices_[f[1]], vertices_[f[2]], dir), 0,
                static_cast<std::size_t>(best_tri)};
}

std::optional<RayHit> TriMesh::intersect_brute_force(const Vec3& origin, const Vec3& dir,
                                                     double t_max) const {
  double best = t_max;
  int best_tri = -1;
  for (int tri = 0; tri < static_cast<int>(triangles_.size()); ++tri) {
    double t;
    if (triangle_hit(tri, origin, dir, best, t) && (t < best || best_tri < 0)) {
      best = t;
      best_tri = tri;
    }
  }
  if (best_tri < 0) return std::nullopt;
  const auto& f = triangles_[best_tri];
  return RayHit{best, facing_normal(vertices_[f[0]], vertices_[f[1]], vertices_[f[2]], dir), 0,
                static_cast<std::size_t>(best_tri)};
}

int TriMesh::count_crossings(const Vec3& origin, const Vec3& dir) const {
  if (nodes_.empty()) return 0;
  const Vec3 inv = dir.cwiseInverse();
  int crossings = 0;
  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    double t_enter;
    if (!node.box.intersect_ray(origin, inv, kInfinity, t_enter)) continue;
    if (node.leaf()) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        double t;
        if (triangle_hit(order_[i], origin, dir, kInfinity, t)) ++crossings;
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return crossings;
}

bool TriMesh::contains(const Vec3& p) const {
  if (nodes_.empty() || !bounds_.overlaps(Aabb{p, p})) return false;
  // Two skewed directions; agreement guards against grazing an edge.
  static const Vec3 d0 = Vec3(0.5773, 0.5779, 0.5768).normalized();
  static const Vec3 d1 = Vec3(-0.3127, 0.8419, -0.4398).normalized();
  const bool in0 = count_crossings(p, d0) % 2 == 1;
  const bool in1 = count_crossings(p, d1) % 2 == 1;
  if (in0 == in1) return in0;
  static const Vec3 d2 = Vec3(0.7071, -0.1234, 0.6963).normalized();
  return count_crossings(p, d2) % 2 == 1;
}

bool TriMesh::is_watertight() const {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : triangles_)
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  if (edges.empty()) return false;
  return std::all_of(edges.begin(), edges.end(), [](const auto& kv) { return kv.second == 2; });
}

double TriMesh::volume() const {
  double v = 0.0;
  for (const auto& t : triangles_)
    v += vertices_[t[0]].dot(vertices_[t[1]].cross(vertices_[t[2]]));
  return v / 6.0;
}

Vec3 TriMesh::centroid() const {
  double v = 0.0;
  Vec3 c = Vec3::Zero();
  for (const auto& t : triangles_) {
    const Vec3& a = vertices_[t[0]];
    const Vec3& b = vertices_[t[1]];
    const Vec3& d = vertices_[t[2]];
    const double tv = a.dot(b.cross(d));
    v += tv;
    c += tv * (a + b + d);
  }
  if (std::abs(v) < 1e-300) return bounds_.center();
  return c / (4.0 * v);
}

bool TriMesh::surface_overlaps(const Obb& box) const {
  if (nodes_.empty()) return false;
  const Aabb world = box.bounds();
  if (!world.overlaps(bounds_)) return false;
  const Quat inv = box.frame.rotation.conjugate();
  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!node.box.overlaps(world)) continue;
    if (node.leaf()) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const auto& f = triangles_[order_[i]];
        const Vec3 a = inv * (vertices_[f[0]] - box.frame.translation);
        const Vec3 b = inv * (vertices_[f[1]] - box.frame.translation);
        const Vec3 c = inv * (vertices_[f[2]] - box.frame.translation);
        if (triangle_box_overlap(a, b, c, box.half_extents)) return true;
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return false;
}

bool TriMesh::surface_intersects(const TriMesh& other) const {
  if (nodes_.empty() || other.nodes_.empty() || !bounds_.overlaps(other.bounds_)) return false;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [ia, ib] = stack.back();
    stack.pop_back();
    const Node& a = nodes_[ia];
    const Node& b = other.nodes_[ib];
    if (!a.box.overlaps(b.box)) continue;
    if (a.leaf() && b.leaf()) {
      for (int i = a.first; i < a.first + a.count; ++i) {
        const auto& fa = triangles_[order_[i]];
        const std::array<Vec3, 3> ta{vertices_[fa[0]], vertices_[fa[1]], vertices_[fa[2]]};
        for (int j = b.first; j < b.first + b.count; ++j) {
          const auto& fb = other.triangles_[other.order_[j]];
          const std::array<Vec3, 3> tb{other.vertices_[fb[0]], other.vertices_[fb[1]],
                                       other.vertices_[fb[2]]};
          if (triangles_intersect(ta, tb)) return true;
        }
      }
    } else if (b.leaf() || (!a.leaf() && a.box.extent().sum() >= b.box.extent().sum())) {
      stack.emplace_back(a.left, ib);
      stack.emplace_back(a.right, ib);
    } else {
      stack.emplace_back(ia, b.left);
      stack.emplace_back(ia, b.right);
    }
  }
  return false;
}

std::optional<RayHit> ray_cast(std::span<const TriMesh* const> meshes, const Vec3& origin,
                               const Vec3& dir, double t_max) {
  std::optional<RayHit> best;
  const Vec3 inv = dir.cwiseInverse();
  for (std::size_t m = 0; m < meshes.size(); ++m) {
    double t_enter;
    const double limit = best ? best->distance : t_max;
    if (!meshes[m]->bounds().intersect_ray(origin, inv, limit, t_enter)) continue;
    if (auto hit = meshes[m]->intersect(origin, dir, limit)) {
      if (!best || hit->distance < best->distance) {
        hit->mesh = m;
        best = hit;
      }
    }
  }
  return best;
}

bool solids_intersect(const TriMesh& a, const TriMesh& b) {
  if (a.empty() || b.empty() || !a.bounds().overlaps(b.bounds())) return false;
  if (a.surface_intersects(b)) return true;
  return b.contains(a.vertices().front()) || a.contains(b.vertices().front());
}

bool box_intersects_solid(const Obb& box, const TriMesh& solid) {
  if (solid.empty() || !box.bounds().overlaps(solid.bounds())) return false;
  if (solid.surface_overlaps(box)) return true;
  return solid.contains(box.frame.translation) || box.contains(solid.vertices().front());
}

bool triangle_box_overlap(const Vec3& v0, const Vec3& v1, const Vec3& v2, const Vec3& h) {
  // Akenine-Moller separating axis test, box centered at the origin.
  for (int k = 0; k < 3; ++k) {
    if (std::max({v0[k], v1[k], v2[k]}) < -h[k] || std::min({v0[k], v1[k], v2[k]}) > h[k])
      return false;
  }
  const Vec3 e0 = v1 - v0, e1 = v2 - v1, e2 = v0 - v2;
  const Vec3 n = e0.cross(e1);
  if (n.squaredNorm() > 0 && separated(n, v0, v1, v2, h)) return false;
  const Vec3 axes[3] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  for (const Vec3& e : {e0, e1, e2})
    for (const Vec3& u : axes) {
      const Vec3 a = u.cross(e);
      if (a.squaredNorm() > 0 && separated(a, v0, v1, v2, h)) return false;
    }
  return true;
}

bool triangles_intersect(const std::array<Vec3, 3>& t0, const std::array<Vec3, 3>& t1) {
  for (int e = 0; e < 3; ++e) {
    if (segment_triangle(t0[e], t0[(e + 1) % 3], t1[0], t1[1], t1[2])) return true;
    if (segment_triangle(t1[e], t1[(e + 1) % 3], t0[0], t0[1], t0[2])) return true;
  }
  return false;
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson, Real-Time Collision Detection 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (p - a).norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (p - b).norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (p - c).norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).norm();
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

TriMesh make_box_mesh(const Vec3& h) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i)
    v.emplace_back((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(), (i & 4) ? h.z() : -h.z());
  // Outward, counter-clockwise.
  std::vector<TriMesh::Triangle> t = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6},
                                      {0, 1, 5}, {0, 5, 4}, {2, 6, 7}, {2, 7, 3},
                                      {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return TriMesh(std::move(v), std::move(t));
}

TriMesh make_box_mesh(const Obb& box) { return make_box_mesh(box.half_extents).transformed(box.frame); }

TriMesh make_lathe(const std::vector<std::array<double, 2>>& profile, int segments) {
  if (profile.size() < 2 || segments < 3) throw InputError("lathe needs >= 2 profile rings");
  std::vector<Vec3> v;
  std::vector<TriMesh::Triangle> t;
  const int rings = static_cast<int>(profile.size());
  for (const auto& [r, z] : profile)
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * s / segments;
      v.emplace_back(r * std::cos(a), r * std::sin(a), z);
    }
  auto at = [&](int ring, int s) { return ring * segments + (s % segments); };
  for (int ring = 0; ring + 1 < rings; ++ring)
    for (int s = 0; s < segments; ++s) {
      t.push_back({at(ring, s), at(ring, s + 1), at(ring + 1, s + 1)});
      t.push_back({at(ring, s), at(ring + 1, s + 1), at(ring + 1, s)});
    }
  const int bottom = static_cast<int>(v.size());
  v.emplace_back(0, 0, profile.front()[1]);
  const int top = static_cast<int>(v.size());
  v.emplace_back(0, 0, profile.back()[1]);
  for (int s = 0; s < segments; ++s) {
    t.push_back({bottom, at(0, s + 1), at(0, s)});
    t.push_back({top, at(rings - 1, s), at(rings - 1, s + 1)});
  }
  return TriMesh(std::move(v), std::move(t));
}

TriMesh make_cylinder(double radius, double height, int segments) {
  return make_lathe({{radius, -height / 2}, {radius, height / 2}}, segments);
}

TriMesh make_uv_sphere(double radius, int rings, int segments) {
  std::vector<Vec3> v;
  std::vector<TriMesh::Triangle> t;
  v.emplace_back(0, 0, -radius);
  for (int r = 1; r < rings; ++r) {
    const double polar = std::numbers::pi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * s / segments;
      v.emplace_back(radius * std::sin(polar) * std::cos(a), radius * std::sin(polar) * std::sin(a),
                     -radius * std::cos(polar));
    }
  }
  v.emplace_back(0, 0, radius);
  const int north = static_cast<int>(v.size()) - 1;
  auto at = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) t.push_back({0, at(1, s + 1), at(1, s)});
  for (int r = 1; r + 1 < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      t.push_back({at(r, s), at(r, s + 1), at(r + 1, s + 1)});
      t.push_back({at(r, s), at(r + 1, s + 1), at(r + 1, s)});
    }
  for (int s = 0; s < segments; ++s) t.push_back({north, at(rings - 1, s), at(rings - 1, s + 1)});
  return TriMesh(std::move(v), std::move(t));
}

TriMesh make_icosphere(double radius, int subdivisions) {
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, p, 0}, {1, p, 0},  {-1, -p, 0}, {1, -p, 0},
                         {0, -1, p}, {0, 1, p},  {0, -1, -p}, {0, 1, -p},
                         {p, 0, -1}, {p, 0, 1},  {-p, 0, -1}, {-p, 0, 1}};
  for (auto& x : v) x.normalize();
  std::vector<TriMesh::Triangle> t = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((0.5 * (v[a] + v[b])).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<TriMesh::Triangle> next;
    for (const auto& f : t) {
      const int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    t = std::move(next);
  }
  for (auto& x : v) x *= radius;
  return TriMesh(std::move(v), std::move(t));
}

TriMesh make_extrusion(const std::vector<std::array<double, 2>>& polygon, double height,
                       std::array<double, 2> fan_center) {
  const int n = static_cast<int>(polygon.size());
  if (n < 3) throw InputError("extrusion polygon needs >= 3 vertices");
  std::vector<Vec3> v;
  for (const auto& [x, y] : polygon) v.emplace_back(x, y, -height / 2);
  for (const auto& [x, y] : polygon) v.emplace_back(x, y, height / 2);
  const int cb = static_cast<int>(v.size());
  v.emplace_back(fan_center[0], fan_center[1], -height / 2);
  const int ct = cb + 1;
  v.emplace_back(fan_center[0], fan_center[1], height / 2);
  std::vector<TriMesh::Triangle> t;
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    t.push_back({i, j, n + j});
    t.push_back({i, n + j, n + i});
    t.push_back({cb, j, i});
    t.push_back({ct, n + i, n + j});
  }
  return TriMesh(std::move(v), std::move(t));
}

void write_off(std::ostream& out, const TriMesh& mesh) {
  out << "OFF\n" << mesh.vertices().size() << ' ' << mesh.triangles().size() << " 0\n";
  out.precision(17);
  for (const auto& v : mesh.vertices()) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

TriMesh read_off(std::istream& in) {
  std::string magic;
  in >> magic;
  if (magic != "OFF") throw FormatError("missing OFF header");
  std::size_t nv = 0, nf = 0, ne = 0;
  if (!(in >> nv >> nf >> ne)) throw FormatError("bad OFF counts line");
  std::vector<Vec3> v(nv);
  for (auto& p : v)
    if (!(in >> p.x() >> p.y() >> p.z())) throw FormatError("truncated OFF vertex list");
  std::vector<TriMesh::Triangle> t(nf);
  for (auto& f : t) {
    int k = 0;
    if (!(in >> k >> f[0] >> f[1] >> f[2]) || k != 3)
      throw FormatError("OFF faces must be triangles");
  }
  return TriMesh(std::move(v), std::move(t));
}

}  // namespace voxgrasp
