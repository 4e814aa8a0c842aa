#include "voxgrasp/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "voxgrasp/error.hpp"

namespace voxgrasp {

using nlohmann::json;

namespace {

constexpr double kObjectClearance = 1e-4;
constexpr double kContactBand = 1.5e-3;
constexpr double kRaiseStep = 5e-4;
constexpr int kMaxRaises = 20;

struct KindName {
  PrimitiveKind kind;
  const char* name;
};
constexpr KindName kKindNames[] = {{PrimitiveKind::box, "box"},
                                   {PrimitiveKind::cylinder, "cylinder"},
                                   {PrimitiveKind::sphere, "sphere"},
                                   {PrimitiveKind::mug, "mug"},
                                   {PrimitiveKind::l_block, "l_block"}};

double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew's monotone chain; counter-clockwise, collinear points dropped.
std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) return pts;
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], p) <= 1e-12) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 1e-12) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Center of mass must project inside a non-degenerate support polygon.
bool supported(const std::vector<Eigen::Vector2d>& contacts, const Eigen::Vector2d& com) {
  const auto hull = convex_hull(contacts);
  if (hull.size() < 3) return false;
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i)
    area += cross2(Eigen::Vector2d::Zero(), hull[i], hull[(i + 1) % hull.size()]);
  if (area < 1e-7) return false;  // under ~0.3 mm x 0.3 mm
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Eigen::Vector2d& a = hull[i];
    const Eigen::Vector2d& b = hull[(i + 1) % hull.size()];
    if (cross2(a, b, com) / (b - a).norm() < 0.0) return false;
  }
  return true;
}

// Rotations bringing each of the 26 face/edge/corner directions of the object
// frame to point straight down.
const std::vector<Quat>& rest_orientations() {
  static const std::vector<Quat> table = [] {
    std::vector<Quat> out;
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j)
        for (int k = -1; k <= 1; ++k) {
          if (i == 0 && j == 0 && k == 0) continue;
          const Vec3 d = Vec3(i, j, k).normalized();
          if (d.z() > 1.0 - 1e-12)
            out.push_back(axis_angle(Vec3::UnitX(), std::numbers::pi));
          else
            out.push_back(Quat::FromTwoVectors(d, -Vec3::UnitZ()).normalized());
        }
    // Face directions first so ties in height favor resting on a face.
    std::stable_sort(out.begin(), out.end(), [](const Quat& a, const Quat& b) {
      auto zeros = [](const Quat& q) {
        const Vec3 d = q.conjugate() * Vec3(0, 0, -1);
        return (std::abs(d.x()) < 1e-9) + (std::abs(d.y()) < 1e-9) + (std::abs(d.z()) < 1e-9);
      };
      return zeros(a) > zeros(b);
    });
    return out;
  }();
  return table;
}

struct Placement {
  Pose pose;
  TriMesh mesh;
  double com_z = kInfinity;
};

// Lower `body` (rotated by `rot`, centroid above (x, y)) until it touches the
// plane or a placed object, then test quasi-static stability.
std::optional<Placement> drop(const TriMesh& body, const Quat& rot, double x, double y,
                              const std::vector<TriMesh>& placed) {
  const TriMesh rotated = body.transformed({rot, Vec3::Zero()});
  const Vec3 c = rotated.centroid();
  double start = 0.01;
  for (const auto& m : placed) start = std::max(start, m.bounds().hi.z() + 0.01);
  const Vec3 shift(x - c.x(), y - c.y(), start - rotated.bounds().lo.z());
  const TriMesh moved = rotated.transformed(Pose::from_translation(shift));

  std::vector<const TriMesh*> obstacles;
  for (const auto& m : placed) obstacles.push_back(&m);

  const auto& verts = moved.vertices();
  std::vector<double> down(verts.size());
  double fall = kInfinity;
  for (std::size_t i = 0; i < verts.size(); ++i) {
    double d = verts[i].z();
    if (auto hit = ray_cast(obstacles, verts[i], -Vec3::UnitZ(), d))
      d = std::min(d, hit->distance - kObjectClearance);
    down[i] = d;
    fall = std::min(fall, d);
  }
  std::vector<Vec3> up_points;
  std::vector<double> up;
  const Aabb& mb = moved.bounds();
  for (const auto& m : placed)
    for (const auto& q : m.vertices()) {
      if (q.x() < mb.lo.x() || q.x() > mb.hi.x() || q.y() < mb.lo.y() || q.y() > mb.hi.y()) continue;
      if (auto hit = moved.intersect(q, Vec3::UnitZ())) {
        up_points.push_back(q);
        up.push_back(hit->distance - kObjectClearance);
        fall = std::min(fall, up.back());
      }
    }
  if (!std::isfinite(fall) || fall < 0.0) return std::nullopt;

  double lift = 0.0;
  TriMesh final_mesh = moved.transformed(Pose::from_translation(Vec3(0, 0, -fall)));
  for (int r = 0;; ++r) {
    const bool hits = std::any_of(placed.begin(), placed.end(),
                                  [&](const TriMesh& m) { return solids_intersect(final_mesh, m); });
    if (!hits) break;
    if (r == kMaxRaises) return std::nullopt;
    lift += kRaiseStep;
    final_mesh = moved.transformed(Pose::from_translation(Vec3(0, 0, -fall + lift)));
  }

  std::vector<Eigen::Vector2d> contacts;
  for (std::size_t i = 0; i < verts.size(); ++i)
    if (down[i] - fall <= kContactBand) contacts.emplace_back(verts[i].x(), verts[i].y());
  for (std::size_t i = 0; i < up_points.size(); ++i)
    if (up[i] - fall <= kContactBand) contacts.emplace_back(up_points[i].x(), up_points[i].y());
  const Vec3 com = final_mesh.centroid();
  if (!supported(contacts, com.head<2>())) return std::nullopt;
  return Placement{{rot, shift + Vec3(0, 0, -fall + lift)}, std::move(final_mesh), com.z()};
}

int draw_count(Rng& rng, double mean, int requested) {
  if (requested >= 0) return requested;
  return std::poisson_distribution<int>(mean)(rng) + 1;
}

}  // namespace

const char* to_string(PrimitiveKind kind) {
  for (const auto& kn : kKindNames)
    if (kn.kind == kind) return kn.name;
  return "?";
}

PrimitiveKind primitive_kind_from_string(const std::string& name) {
  for (const auto& kn : kKindNames)
    if (name == kn.name) return kn.kind;
  throw InputError("unknown primitive kind '" + name + "'");
}

TriMesh PrimitiveSpec::mesh() const {
  const auto& d = dims;
  switch (kind) {
    case PrimitiveKind::box:
      return make_box_mesh(Vec3(d[0] / 2, d[1] / 2, d[2] / 2));
    case PrimitiveKind::cylinder:
      return make_cylinder(d[0], d[1]);
    case PrimitiveKind::sphere:
      return make_uv_sphere(d[0]);
    case PrimitiveKind::mug:
      return make_lathe({{d[0], -d[2] / 2}, {d[0], 0.0}, {d[1], 0.0}, {d[1], d[2] / 2}});
    case PrimitiveKind::l_block: {
      const double a = d[0], t = d[1], h = a / 2;
      return make_extrusion({{-h, -h}, {h, -h}, {h, t - h}, {t - h, t - h}, {t - h, h}, {-h, h}}, d[2],
                            {t / 2 - h, t / 2 - h});
    }
  }
  throw InputError("unknown primitive kind");
}

double PrimitiveSpec::height() const {
  switch (kind) {
    case PrimitiveKind::box: return dims[2];
    case PrimitiveKind::cylinder: return dims[1];
    case PrimitiveKind::sphere: return 2 * dims[0];
    case PrimitiveKind::mug: return dims[2];
    case PrimitiveKind::l_block: return dims[2];
  }
  return 0.0;
}

double PrimitiveSpec::lateral_extent() const {
  switch (kind) {
    case PrimitiveKind::box: return std::max(dims[0], dims[1]);
    case PrimitiveKind::cylinder: return 2 * dims[0];
    case PrimitiveKind::sphere: return 2 * dims[0];
    case PrimitiveKind::mug: return 2 * std::max(dims[0], dims[1]);
    case PrimitiveKind::l_block: return dims[0];
  }
  return 0.0;
}

double PrimitiveSpec::min_lateral_extent() const {
  switch (kind) {
    case PrimitiveKind::box: return std::min(dims[0], dims[1]);
    case PrimitiveKind::cylinder: return 2 * dims[0];
    case PrimitiveKind::sphere: return 2 * dims[0];
    case PrimitiveKind::mug: return 2 * std::min(dims[0], dims[1]);
    case PrimitiveKind::l_block: return dims[1];
  }
  return 0.0;
}

void PrimitiveSpec::validate() const {
  const int used = kind == PrimitiveKind::sphere ? 1 : (kind == PrimitiveKind::cylinder ? 2 : 3);
  for (int i = 0; i < used; ++i)
    if (!(dims[i] > 0.0) || !std::isfinite(dims[i]))
      throw InputError(std::string(to_string(kind)) + " dimensions must be positive");
  if (kind == PrimitiveKind::mug && !(dims[1] < dims[0]))
    throw InputError("mug top radius must be below its base radius");
  if (kind == PrimitiveKind::l_block && !(dims[1] < dims[0]))
    throw InputError("l_block leg thickness must be below its leg length");
}

std::vector<PrimitiveSpec> make_object_pool(PoolSplit split, std::size_t count, std::uint64_t seed) {
  const char* stream = split == PoolSplit::train ? "pool-train" : split == PoolSplit::test ? "pool-test" : "pool-blocks";
  Rng rng = substream(seed, stream);
  std::vector<PrimitiveSpec> pool;
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PrimitiveSpec s;
    if (split == PoolSplit::blocks) {
      s.kind = PrimitiveKind::box;
      s.dims = {uniform(rng, 0.025, 0.06), uniform(rng, 0.025, 0.06), uniform(rng, 0.025, 0.06)};
      pool.push_back(s);
      continue;
    }
    s.kind = static_cast<PrimitiveKind>(uniform_int(rng, 0, 4));
    switch (s.kind) {
      case PrimitiveKind::box:
        s.dims = {uniform(rng, 0.025, 0.07), uniform(rng, 0.025, 0.07), uniform(rng, 0.025, 0.11)};
        break;
      case PrimitiveKind::cylinder:
        s.dims = {uniform(rng, 0.015, 0.035), uniform(rng, 0.03, 0.12), 0.0};
        break;
      case PrimitiveKind::sphere:
        s.dims = {uniform(rng, 0.02, 0.035), 0.0, 0.0};
        break;
      case PrimitiveKind::mug: {
        const double base = uniform(rng, 0.025, 0.035);
        s.dims = {base, base * uniform(rng, 0.6, 0.85), uniform(rng, 0.06, 0.12)};
        break;
      }
      case PrimitiveKind::l_block: {
        const double leg = uniform(rng, 0.05, 0.09);
        s.dims = {leg, uniform(rng, 0.02, 0.035), uniform(rng, 0.025, 0.05)};
        break;
      }
    }
    pool.push_back(s);
  }
  return pool;
}

Scene::Scene(SceneDescription description) : description_(std::move(description)) {
  meshes_.reserve(description_.objects.size());
  for (const auto& obj : description_.objects) {
    obj.spec.validate();
    TriMesh m = obj.spec.mesh();
    if (obj.scale != 1.0) {
      std::vector<Vec3> v = m.vertices();
      for (auto& p : v) p *= obj.scale;
      m = TriMesh(std::move(v), m.triangles());
    }
    meshes_.push_back(m.transformed(obj.pose));
  }
}

std::vector<const TriMesh*> Scene::mesh_pointers() const {
  std::vector<const TriMesh*> out;
  out.reserve(meshes_.size());
  for (const auto& m : meshes_) out.push_back(&m);
  return out;
}

void Scene::remove_object(std::size_t index) {
  if (index >= meshes_.size()) throw RangeError("object index out of range");
  meshes_.erase(meshes_.begin() + static_cast<std::ptrdiff_t>(index));
  description_.objects.erase(description_.objects.begin() + static_cast<std::ptrdiff_t>(index));
}

SceneDescription generate_pile(Rng& rng, const std::vector<PrimitiveSpec>& pool, double length,
                               const PileConfig& config, int object_count) {
  if (pool.empty()) throw InputError("object pool is empty");
  SceneDescription scene;
  scene.kind = SceneKind::pile;
  scene.length = length;
  const int m = draw_count(rng, config.poisson_mean, object_count);
  std::vector<TriMesh> placed;
  const double lo = length / 2 - config.footprint / 2, hi = length / 2 + config.footprint / 2;
  for (int n = 0; n < m; ++n) {
    const PrimitiveSpec& spec = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    const TriMesh body = spec.mesh();
    for (int attempt = 0; attempt < config.attempts_per_object; ++attempt) {
      const double x = uniform(rng, lo, hi), y = uniform(rng, lo, hi);
      const Quat yaw = rotation_z(uniform(rng, 0.0, 2.0 * std::numbers::pi));
      std::optional<Placement> best;
      if (spec.kind == PrimitiveKind::sphere) {
        best = drop(body, yaw, x, y, placed);
      } else {
        for (const Quat& rest : rest_orientations()) {
          auto p = drop(body, (yaw * rest).normalized(), x, y, placed);
          if (p && (!best || p->com_z < best->com_z - 1e-9)) best = std::move(p);
        }
      }
      if (best) {
        scene.objects.push_back({spec, best->pose, 1.0});
        placed.push_back(std::move(best->mesh));
        break;
      }
    }
  }
  return scene;
}

SceneDescription generate_packed(Rng& rng, const std::vector<PrimitiveSpec>& pool, double length,
                                 const PackedConfig& config, int object_count) {
  std::vector<const PrimitiveSpec*> tall;
  for (const auto& s : pool)
    if (s.is_tall()) tall.push_back(&s);
  if (tall.empty()) throw InputError("object pool has no tall primitives for packed scenes");
  SceneDescription scene;
  scene.kind = SceneKind::packed;
  scene.length = length;
  const int m = draw_count(rng, config.poisson_mean, object_count);
  std::vector<TriMesh> placed;
  for (int n = 0; n < m; ++n) {
    const PrimitiveSpec& spec = *tall[std::uniform_int_distribution<std::size_t>(0, tall.size() - 1)(rng)];
    const TriMesh body = spec.mesh();
    for (int attempt = 0; attempt < config.attempts_per_object; ++attempt) {
      const double x = uniform(rng, config.margin, length - config.margin);
      const double y = uniform(rng, config.margin, length - config.margin);
      const Pose pose{rotation_z(uniform(rng, 0.0, 2.0 * std::numbers::pi)),
                      Vec3(x, y, spec.height() / 2)};
      TriMesh mesh = body.transformed(pose);
      const bool hits = std::any_of(placed.begin(), placed.end(),
                                    [&](const TriMesh& other) { return solids_intersect(mesh, other); });
      if (hits) continue;
      scene.objects.push_back({spec, pose, 1.0});
      placed.push_back(std::move(mesh));
      break;
    }
  }
  return scene;
}

Pose ViewpointSample::camera_pose() const {
  const Vec3 eye = target + r * Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                                     std::cos(theta));
  return look_at(eye, target);
}

ViewpointSample sample_viewpoint(Rng& rng, double length, const Vec3& target) {
  ViewpointSample v;
  v.r = uniform(rng, 1.6 * length, 2.4 * length);
  v.theta = uniform(rng, 0.0, std::numbers::pi / 4);
  v.phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  v.target = target;
  return v;
}

DepthImage render_depth(const Scene& scene, const Pose& camera_to_world,
                        const CameraIntrinsics& k) {
  DepthImage image(k, camera_to_world);
  const auto meshes = scene.mesh_pointers();
  const Mat3 rot = camera_to_world.matrix();
  const Vec3 origin = camera_to_world.translation;
#pragma omp parallel for schedule(dynamic)
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      const Vec3 ray_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const double norm = ray_cam.norm();
      const Vec3 dir = rot * (ray_cam / norm);
      double t = kInfinity;
      if (dir.z() < 0.0) t = (scene.support_z() - origin.z()) / dir.z();
      if (auto hit = ray_cast(meshes, origin, dir, t)) t = std::min(t, hit->distance);
      // Ray length to optical-axis depth.
      if (std::isfinite(t) && t > 0.0) image.at(u, v) = static_cast<float>(t / norm);
    }
  return image;
}

TsdfVolume fuse(const GridFrame& frame, const std::vector<DepthImage>& images, double truncation) {
  TsdfVolume volume(frame, truncation);
  for (const auto& img : images) volume.integrate(img);
  return volume;
}

std::string scene_to_json(const SceneDescription& scene) {
  json j;
  j["kind"] = scene.kind == SceneKind::pile ? "pile" : "packed";
  j["length"] = scene.length;
  j["support_z"] = scene.support_z;
  j["seed"] = scene.seed;
  j["objects"] = json::array();
  for (const auto& o : scene.objects) {
    const Quat& q = o.pose.rotation;
    j["objects"].push_back({{"kind", to_string(o.spec.kind)},
                            {"dims", o.spec.dims},
                            {"translation", {o.pose.translation.x(), o.pose.translation.y(), o.pose.translation.z()}},
                            {"rotation", {q.w(), q.x(), q.y(), q.z()}},
                            {"scale", o.scale}});
  }
  return j.dump(2) + "\n";
}

SceneDescription scene_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SceneDescription s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "pile") s.kind = SceneKind::pile;
    else if (kind == "packed") s.kind = SceneKind::packed;
    else throw FormatError("unknown scene kind '" + kind + "'");
    s.length = j.at("length").get<double>();
    s.support_z = j.value("support_z", 0.0);
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& o : j.at("objects")) {
      PlacedObject p;
      p.spec.kind = primitive_kind_from_string(o.at("kind").get<std::string>());
      p.spec.dims = o.at("dims").get<std::array<double, 3>>();
      const auto t = o.at("translation").get<std::array<double, 3>>();
      const auto r = o.at("rotation").get<std::array<double, 4>>();
      p.pose = {Quat(r[0], r[1], r[2], r[3]), Vec3(t[0], t[1], t[2])};
      p.scale = o.value("scale", 1.0);
      s.objects.push_back(p);
    }
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad scene file: ") + e.what());
  } catch (const InputError& e) {
    throw FormatError(std::string("bad scene file: ") + e.what());
  }
}

}  // namespace voxgrasp
