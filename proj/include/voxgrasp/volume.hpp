#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "voxgrasp/geometry.hpp"
#include "voxgrasp/rng.hpp"

namespace voxgrasp {

/// Placement of an N^3 grid over a cubic workspace of side `length`.
/// `world_to_volume` maps world points into the volume frame, whose origin is
/// the workspace corner. Continuous voxel coordinates are volume-frame
/// positions divided by the voxel size; voxel (i, j, k) spans [i, i+1) and its
/// sample sits at the center (i + 0.5).
struct GridFrame {
  int resolution = 40;
  double length = 0.30;
  Pose world_to_volume = Pose::from_translation(Vec3(0, 0, 0.05));

  double voxel_size() const { return length / resolution; }
  std::size_t voxel_count() const {
    const auto n = static_cast<std::size_t>(resolution);
    return n * n * n;
  }
  /// x fastest, then y, then z.
  std::size_t index(int i, int j, int k) const {
    const auto n = static_cast<std::size_t>(resolution);
    return (static_cast<std::size_t>(k) * n + static_cast<std::size_t>(j)) * n +
           static_cast<std::size_t>(i);
  }
  Vec3 world_to_voxel(const Vec3& world) const { return world_to_volume * world / voxel_size(); }
  Vec3 voxel_to_world(const Vec3& voxel) const {
    return world_to_volume.inverse() * Vec3(voxel * voxel_size());
  }
  Vec3 voxel_center_world(int i, int j, int k) const {
    return voxel_to_world(Vec3(i + 0.5, j + 0.5, k + 0.5));
  }
  /// Geometric center of the workspace cube, world frame.
  Vec3 center_world() const { return voxel_to_world(Vec3::Constant(resolution / 2.0)); }
  /// Point on the support plane (world z = 0) below the workspace center.
  Vec3 table_center_world() const {
    Vec3 c = center_world();
    c.z() = 0.0;
    return c;
  }
  bool contains_world(const Vec3& world) const;
  void validate() const;
};

struct CameraIntrinsics {
  int width = 320;
  int height = 240;
  double fx = 277.13;
  double fy = 277.13;
  double cx = 160.0;
  double cy = 120.0;

  void validate() const;
};

/// Depth image in meters along the optical axis; 0 marks an invalid pixel.
/// `extrinsic` is the camera pose in the world (camera -> world), with the
/// OpenCV convention: +z optical axis, +x right, +y down. Pixel (u, v) is
/// sampled at image coordinates exactly (u, v).
struct DepthImage {
  CameraIntrinsics intrinsics;
  Pose extrinsic;
  std::vector<float> depths;

  DepthImage() = default;
  DepthImage(const CameraIntrinsics& k, const Pose& camera_to_world);
  float at(int u, int v) const { return depths[static_cast<std::size_t>(v) * intrinsics.width + u]; }
  float& at(int u, int v) { return depths[static_cast<std::size_t>(v) * intrinsics.width + u]; }
};

/// Camera pose looking from `eye` at `target`; world +z is "up" in the image
/// unless the view is vertical, in which case world +y is used.
Pose look_at(const Vec3& eye, const Vec3& target);

struct DistanceSample {
  double meters = 0.0;
  bool observed = true;
};

struct SurfacePoint {
  Vec3 point;
  Vec3 normal;
};

/// Projective truncated signed distance field with weighted running average.
/// Values are normalized by the truncation distance into [-1, 1]; voxels never
/// observed hold value 0 and weight 0.
class TsdfVolume {
 public:
  /// A truncation of 0 selects the default of four voxels.
  explicit TsdfVolume(const GridFrame& frame = {}, double truncation = 0.0);
  /// Volume from raw grids (x fastest); throws ShapeError on size mismatch.
  TsdfVolume(const GridFrame& frame, double truncation, std::vector<float> values,
             std::vector<float> weights);

  const GridFrame& frame() const { return frame_; }
  int resolution() const { return frame_.resolution; }
  double voxel_size() const { return frame_.voxel_size(); }
  double truncation() const { return truncation_; }

  std::span<const float> values() const { return values_; }
  std::span<const float> weights() const { return weights_; }
  /// Overwrite one voxel; value is clamped to [-1, 1] and weight to >= 0.
  void set_voxel(int i, int j, int k, float value, float weight);

  float value(int i, int j, int k) const { return values_[frame_.index(i, j, k)]; }
  float weight(int i, int j, int k) const { return weights_[frame_.index(i, j, k)]; }

  /// Whether a grasp centered on this voxel is admissible: the voxel was
  /// observed and lies no more than one voxel outside a surface. Used both
  /// to mask predictions and to filter training records.
  bool grasp_admissible(int i, int j, int k) const {
    const std::size_t idx = frame_.index(i, j, k);
    return weights_[idx] > 0.0f && values_[idx] * truncation_ <= frame_.voxel_size();
  }

  /// Fuse one depth image. Uses the OpenMP kernel; `serial` selects the
  /// reference loop (identical results).
  void integrate(const DepthImage& image, bool serial = false);

  /// Trilinear distance in meters. Throws RangeError outside the workspace.
  DistanceSample distance_at(const Vec3& world) const;

  /// Zero-crossings along grid edges, interpolated linearly, with normals from
  /// the TSDF gradient pointing to the observed (positive) side.
  std::vector<SurfacePoint> surface_points() const;
  /// `count` points drawn uniformly (with replacement) from surface_points().
  /// Throws NoSurfaceError if there is no zero crossing and count > 0.
  std::vector<SurfacePoint> extract_surface_points(std::size_t count, Rng& rng) const;

 private:
  Vec3 gradient_at_voxel(int i, int j, int k) const;

  GridFrame frame_;
  double truncation_;
  std::vector<float> values_;
  std::vector<float> weights_;
  std::vector<double> sums_;  // running sum of observations per voxel
};

/// Grasp in the world frame.
struct Grasp {
  Pose pose;
  double width = 0.0;
};

/// Grasp in continuous voxel coordinates: position / voxel size, rotation in
/// the volume frame, width in voxel units.
struct VoxelGrasp {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  double width = 0.0;
};

/// Throws RangeError if the grasp position is outside the workspace.
VoxelGrasp world_to_voxel(const GridFrame& frame, const Grasp& grasp);
Grasp voxel_to_world(const GridFrame& frame, const VoxelGrasp& grasp);

/// `.tsdf` file: "TSDF", u32 N, f32 length, u32 reserved, then N^3 f32 values
/// and N^3 f32 weights, all little-endian, x fastest.
void write_tsdf(const std::filesystem::path& path, const TsdfVolume& volume);
/// Grid placement is not stored in the file; `frame` supplies the pose and is
/// checked against the stored N and length.
TsdfVolume read_tsdf(const std::filesystem::path& path, const GridFrame& frame, double truncation = 0.0);
struct TsdfHeader {
  std::uint32_t resolution = 0;
  float length = 0.0f;
};
/// Reads and checks only the 16-byte header.
TsdfHeader read_tsdf_header(const std::filesystem::path& path);

}  // namespace voxgrasp
