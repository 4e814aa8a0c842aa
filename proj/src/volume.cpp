#include "voxgrasp/volume.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "voxgrasp/error.hpp"
#include "voxgrasp/io.hpp"
#include "voxgrasp/kernels.hpp"

namespace voxgrasp {

bool GridFrame::contains_world(const Vec3& world) const {
  const Vec3 c = world_to_voxel(world);
  return (c.array() >= 0.0).all() && (c.array() < resolution).all();
}

void GridFrame::validate() const {
  if (resolution <= 0) throw InputError("grid resolution must be positive");
  if (!(length > 0.0) || !std::isfinite(length)) throw InputError("workspace length must be positive");
}

void CameraIntrinsics::validate() const {
  if (width <= 0 || height <= 0) throw InputError("image size must be positive");
  if (!(fx > 0.0) || !(fy > 0.0)) throw InputError("focal lengths must be positive");
}

DepthImage::DepthImage(const CameraIntrinsics& k, const Pose& camera_to_world)
    : intrinsics(k),
      extrinsic(camera_to_world),
      depths(static_cast<std::size_t>(k.width) * k.height, 0.0f) {
  k.validate();
}

Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  Vec3 up = Vec3::UnitZ();
  if (std::abs(z.dot(up)) > 1.0 - 1e-9) up = Vec3::UnitY();
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  return {quat_from_axes(x, y, z), eye};
}

TsdfVolume::TsdfVolume(const GridFrame& frame, double truncation)
    : frame_(frame),
      truncation_(truncation > 0.0 ? truncation : 4.0 * frame.voxel_size()),
      values_(frame.voxel_count(), 0.0f),
      weights_(frame.voxel_count(), 0.0f),
      sums_(frame.voxel_count(), 0.0) {
  frame_.validate();
}

TsdfVolume::TsdfVolume(const GridFrame& frame, double truncation, std::vector<float> values,
                       std::vector<float> weights)
    : TsdfVolume(frame, truncation) {
  if (values.size() != frame_.voxel_count() || weights.size() != frame_.voxel_count())
    throw ShapeError("grid of " + std::to_string(values.size()) + "/" +
                     std::to_string(weights.size()) + " voxels, expected " +
                     std::to_string(frame_.voxel_count()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    weights_[i] = std::max(weights[i], 0.0f);
    values_[i] = weights_[i] > 0.0f ? std::clamp(values[i], -1.0f, 1.0f) : 0.0f;
    sums_[i] = static_cast<double>(values_[i]) * weights_[i];
  }
}

void TsdfVolume::set_voxel(int i, int j, int k, float value, float weight) {
  const std::size_t idx = frame_.index(i, j, k);
  weights_[idx] = std::max(weight, 0.0f);
  values_[idx] = weights_[idx] > 0.0f ? std::clamp(value, -1.0f, 1.0f) : 0.0f;
  sums_[idx] = static_cast<double>(values_[idx]) * weights_[idx];
}

void TsdfVolume::integrate(const DepthImage& image, bool serial) {
  image.intrinsics.validate();
  if (image.depths.size() != static_cast<std::size_t>(image.intrinsics.width) * image.intrinsics.height)
    throw ShapeError("depth buffer does not match the image size");
  kernels::TsdfIntegrateArgs args;
  args.resolution = frame_.resolution;
  args.voxel_size = frame_.voxel_size();
  args.truncation = truncation_;
  args.volume_to_camera = image.extrinsic.inverse() * frame_.world_to_volume.inverse();
  args.width = image.intrinsics.width;
  args.height = image.intrinsics.height;
  args.fx = image.intrinsics.fx;
  args.fy = image.intrinsics.fy;
  args.cx = image.intrinsics.cx;
  args.cy = image.intrinsics.cy;
  args.depths = image.depths.data();
  if (serial)
    kernels::serial::tsdf_integrate(args, sums_, weights_, values_);
  else
    kernels::parallel::tsdf_integrate(args, sums_, weights_, values_);
}

DistanceSample TsdfVolume::distance_at(const Vec3& world) const {
  const Vec3 c = frame_.world_to_voxel(world);
  const int n = frame_.resolution;
  if (!((c.array() >= 0.0).all() && (c.array() <= n).all()))
    throw RangeError("distance query outside the workspace");
  std::array<int, 3> lo{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const double f = c[a] - 0.5;
    int i0 = static_cast<int>(std::floor(f));
    double t = f - i0;
    if (i0 < 0) {
      i0 = 0;
      t = 0.0;
    } else if (i0 >= n - 1) {
      i0 = n - 1;
      t = 0.0;
    }
    lo[a] = i0;
    frac[a] = t;
  }
  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    double w = 1.0;
    std::array<int, 3> idx{};
    for (int a = 0; a < 3; ++a) {
      const bool up = (corner >> a) & 1;
      w *= up ? frac[a] : 1.0 - frac[a];
      idx[a] = lo[a] + (up ? 1 : 0);
    }
    if (w == 0.0) continue;
    const std::size_t v = frame_.index(idx[0], idx[1], idx[2]);
    if (weights_[v] == 0.0f) return {truncation_, false};
    acc += w * values_[v];
  }
  return {acc * truncation_, true};
}

Vec3 TsdfVolume::gradient_at_voxel(int i, int j, int k) const {
  const int n = frame_.resolution;
  const std::array<int, 3> p{i, j, k};
  Vec3 g = Vec3::Zero();
  auto observed = [&](const std::array<int, 3>& q) {
    for (int a = 0; a < 3; ++a)
      if (q[a] < 0 || q[a] >= n) return false;
    return weights_[frame_.index(q[0], q[1], q[2])] > 0.0f;
  };
  auto val = [&](const std::array<int, 3>& q) {
    return static_cast<double>(values_[frame_.index(q[0], q[1], q[2])]);
  };
  for (int a = 0; a < 3; ++a) {
    auto lo = p, hi = p;
    lo[a] -= 1;
    hi[a] += 1;
    const bool has_lo = observed(lo), has_hi = observed(hi);
    if (has_lo && has_hi) g[a] = 0.5 * (val(hi) - val(lo));
    else if (has_hi) g[a] = val(hi) - val(p);
    else if (has_lo) g[a] = val(p) - val(lo);
  }
  return g;
}

std::vector<SurfacePoint> TsdfVolume::surface_points() const {
  const int n = frame_.resolution;
  const Pose volume_to_world = frame_.world_to_volume.inverse();
  std::vector<SurfacePoint> out;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const std::size_t a_idx = frame_.index(i, j, k);
        if (weights_[a_idx] == 0.0f) continue;
        const double a = values_[a_idx];
        for (int axis = 0; axis < 3; ++axis) {
          std::array<int, 3> q{i, j, k};
          q[axis] += 1;
          if (q[axis] >= n) continue;
          const std::size_t b_idx = frame_.index(q[0], q[1], q[2]);
          if (weights_[b_idx] == 0.0f) continue;
          const double b = values_[b_idx];
          if ((a > 0.0) == (b > 0.0)) continue;
          const double t = a / (a - b);
          Vec3 voxel(i + 0.5, j + 0.5, k + 0.5);
          voxel[axis] += t;
          Vec3 normal = (1.0 - t) * gradient_at_voxel(i, j, k) + t * gradient_at_voxel(q[0], q[1], q[2]);
          if (normal.norm() < 1e-12) {
            normal = Vec3::Zero();
            normal[axis] = b > a ? 1.0 : -1.0;
          }
          normal.normalize();
          out.push_back({frame_.voxel_to_world(voxel), volume_to_world.apply_direction(normal)});
        }
      }
  return out;
}

std::vector<SurfacePoint> TsdfVolume::extract_surface_points(std::size_t count, Rng& rng) const {
  if (count == 0) return {};
  const auto all = surface_points();
  if (all.empty()) throw NoSurfaceError("volume has no zero crossing");
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  std::vector<SurfacePoint> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(all[pick(rng)]);
  return out;
}

VoxelGrasp world_to_voxel(const GridFrame& frame, const Grasp& grasp) {
  if (!frame.contains_world(grasp.pose.translation))
    throw RangeError("grasp position outside the workspace");
  return {frame.world_to_voxel(grasp.pose.translation),
          (frame.world_to_volume.rotation * grasp.pose.rotation).normalized(),
          grasp.width / frame.voxel_size()};
}

Grasp voxel_to_world(const GridFrame& frame, const VoxelGrasp& grasp) {
  return {{(frame.world_to_volume.rotation.conjugate() * grasp.orientation).normalized(),
           frame.voxel_to_world(grasp.position)},
          grasp.width * frame.voxel_size()};
}

namespace {

constexpr char kTsdfMagic[4] = {'T', 'S', 'D', 'F'};

TsdfHeader parse_header(io::Reader& in) {
  if (in.take(4) != std::string_view(kTsdfMagic, 4)) throw FormatError("bad tsdf magic");
  TsdfHeader h;
  h.resolution = in.get<std::uint32_t>();
  h.length = in.get<float>();
  in.get<std::uint32_t>();
  if (h.resolution == 0 || h.resolution > 1024 || !(h.length > 0.0f))
    throw FormatError("bad tsdf header");
  return h;
}

}  // namespace

void write_tsdf(const std::filesystem::path& path, const TsdfVolume& volume) {
  std::string out;
  const std::size_t count = volume.frame().voxel_count();
  out.reserve(16 + 8 * count);
  out.append(kTsdfMagic, 4);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(volume.resolution()));
  io::put<float>(out, static_cast<float>(volume.frame().length));
  io::put<std::uint32_t>(out, 0);
  out.append(reinterpret_cast<const char*>(volume.values().data()), count * sizeof(float));
  out.append(reinterpret_cast<const char*>(volume.weights().data()), count * sizeof(float));
  io::write_file_atomic(path, out);
}

TsdfHeader read_tsdf_header(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  io::Reader in(data, path.string());
  return parse_header(in);
}

TsdfVolume read_tsdf(const std::filesystem::path& path, const GridFrame& frame, double truncation) {
  const std::string data = io::read_file(path);
  io::Reader in(data, path.string());
  const TsdfHeader h = parse_header(in);
  if (static_cast<int>(h.resolution) != frame.resolution ||
      std::abs(h.length - frame.length) > 1e-6 * frame.length)
    throw ShapeError(path.string() + ": grid " + std::to_string(h.resolution) +
                     " does not match configured grid " + std::to_string(frame.resolution));
  const std::size_t count = frame.voxel_count();
  std::vector<float> values(count), weights(count);
  in.read(values.data(), count * sizeof(float));
  in.read(weights.data(), count * sizeof(float));
  return TsdfVolume(frame, truncation, std::move(values), std::move(weights));
}

}  // namespace voxgrasp
