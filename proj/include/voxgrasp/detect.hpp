#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voxgrasp/neural.hpp"
#include "voxgrasp/volume.hpp"

namespace voxgrasp {

struct DetectionConfig {
  double sigma = 1.0;     // voxels
  double epsilon = 0.9;   // quality threshold
  int nms_window = 3;     // odd, voxels per side
  int max_detections = 32;

  void validate() const;
};

struct Detection {
  Grasp grasp;  // world frame, width in meters
  double quality = 0.0;
  std::array<int, 3> voxel{};
};

/// Separable Gaussian over an N^3 grid (x fastest), radius ceil(3 sigma),
/// normalized taps, replicated border.
std::vector<float> smooth_quality(std::span<const float> quality, int n, double sigma,
                                  nn::Backend backend = nn::Backend::parallel);

/// Zeroes quality wherever volume.grasp_admissible() rejects the voxel
/// (unobserved, or farther than one voxel outside the observed surface).
std::vector<float> mask_quality(std::span<const float> quality, const TsdfVolume& volume);

/// Indices of voxels with q >= epsilon that are strict maxima of their
/// window; among equal neighbors the lowest linear index wins.
std::vector<std::size_t> nms_peaks(std::span<const float> quality, int n, double epsilon, int window);

/// Threshold, NMS, read rotation and width at the survivors, convert to the
/// world frame, sort by quality (descending, then index) and truncate.
std::vector<Detection> select_grasps(std::span<const float> quality, const nn::GraspMap& map,
                                     const DetectionConfig& config, const GridFrame& frame,
                                     double max_width);

struct PlanResult {
  std::vector<Detection> detections;
  double planning_ms = 0.0;  // forward + smooth + mask + select
};

/// Throws ShapeError if the volume resolution is not usable by the model.
PlanResult plan(const TsdfVolume& volume, const nn::VgnModel<float>& model, const DetectionConfig& config,
                double max_width, nn::Backend backend = nn::Backend::parallel);

/// One JSON object per line.
std::string detection_to_json(const Detection& d);

}  // namespace voxgrasp
