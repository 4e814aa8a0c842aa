#include "voxgrasp/detect.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "voxgrasp/error.hpp"
#include "voxgrasp/kernels.hpp"

namespace voxgrasp {

void DetectionConfig::validate() const {
  if (!(sigma > 0.0)) throw InputError("sigma must be > 0");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("epsilon must lie in (0, 1)");
  if (nms_window < 3 || nms_window % 2 == 0) throw InputError("nms_window must be odd and >= 3");
  if (max_detections < 1) throw InputError("max_detections must be >= 1");
}

namespace {

std::size_t cube(int n) { return static_cast<std::size_t>(n) * n * n; }

void check_grid(std::size_t size, int n) {
  if (n <= 0 || size != cube(n))
    throw ShapeError("grid has " + std::to_string(size) + " voxels, expected " + std::to_string(cube(n)));
}

}  // namespace

std::vector<float> smooth_quality(std::span<const float> quality, int n, double sigma, nn::Backend backend) {
  check_grid(quality.size(), n);
  if (!(sigma > 0.0)) throw InputError("sigma must be > 0");
  std::vector<float> out(quality.begin(), quality.end());
  if (backend == nn::Backend::parallel)
    kernels::parallel::gaussian_smooth(out, n, sigma);
  else
    kernels::serial::gaussian_smooth(out, n, sigma);
  return out;
}

std::vector<float> mask_quality(std::span<const float> quality, const TsdfVolume& volume) {
  const int n = volume.resolution();
  check_grid(quality.size(), n);
  std::vector<float> out(quality.begin(), quality.end());
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (!volume.grasp_admissible(i, j, k)) out[volume.frame().index(i, j, k)] = 0.0f;
  return out;
}

std::vector<std::size_t> nms_peaks(std::span<const float> quality, int n, double epsilon, int window) {
  check_grid(quality.size(), n);
  if (window < 3 || window % 2 == 0) throw InputError("nms_window must be odd and >= 3");
  const int r = window / 2;
  auto q = [&](std::size_t idx) { return quality[idx] >= epsilon ? quality[idx] : 0.0f; };
  std::vector<std::size_t> peaks;
  const std::size_t nn = static_cast<std::size_t>(n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const std::size_t idx = (k * nn + j) * nn + i;
        const float v = q(idx);
        if (v <= 0.0f) continue;
        bool peak = true;
        for (int dk = -r; dk <= r && peak; ++dk)
          for (int dj = -r; dj <= r && peak; ++dj)
            for (int di = -r; di <= r; ++di) {
              const int a = i + di, b = j + dj, c = k + dk;
              if (a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n) continue;
              const std::size_t o = (c * nn + b) * nn + a;
              if (o == idx) continue;
              const float u = q(o);
              if (u > v || (u == v && o < idx)) {
                peak = false;
                break;
              }
            }
        if (peak) peaks.push_back(idx);
      }
  return peaks;
}

std::vector<Detection> select_grasps(std::span<const float> quality, const nn::GraspMap& map,
                                     const DetectionConfig& config, const GridFrame& frame, double max_width) {
  config.validate();
  const int n = map.resolution;
  if (n != frame.resolution) throw ShapeError("grasp map and grid frame disagree on the resolution");
  check_grid(quality.size(), n);
  const auto peaks = nms_peaks(quality, n, config.epsilon, config.nms_window);
  std::vector<Detection> out;
  out.reserve(peaks.size());
  const std::size_t nn = static_cast<std::size_t>(n);
  for (std::size_t idx : peaks) {
    const int i = static_cast<int>(idx % nn), j = static_cast<int>((idx / nn) % nn), k = static_cast<int>(idx / (nn * nn));
    VoxelGrasp vg;
    vg.position = Vec3(i + 0.5, j + 0.5, k + 0.5);
    vg.orientation = map.rotation_at(idx);
    vg.width = std::clamp(double(map.width[idx]), 0.0, 1.0) * max_width / frame.voxel_size();
    Detection d;
    d.grasp = voxel_to_world(frame, vg);
    d.quality = quality[idx];
    d.voxel = {i, j, k};
    out.push_back(d);
  }
  // peaks are in index order, so a stable sort keeps index order among ties
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.quality > b.quality; });
  if (out.size() > static_cast<std::size_t>(config.max_detections)) out.resize(config.max_detections);
  return out;
}

PlanResult plan(const TsdfVolume& volume, const nn::VgnModel<float>& model, const DetectionConfig& config,
                double max_width, nn::Backend backend) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int n = volume.resolution();
  const nn::GraspMap map = nn::predict(model, volume.values(), n, backend);
  const auto smoothed = smooth_quality(map.quality, n, config.sigma, backend);
  const auto masked = mask_quality(smoothed, volume);
  PlanResult r;
  r.detections = select_grasps(masked, map, config, volume.frame(), max_width);
  r.planning_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string detection_to_json(const Detection& d) {
  const Vec3& t = d.grasp.pose.translation;
  const Quat& q = d.grasp.pose.rotation;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "{\"t\":[%.9g,%.9g,%.9g],\"r\":[%.9g,%.9g,%.9g,%.9g],\"width_m\":%.9g,\"quality\":%.9g,"
                "\"voxel\":[%d,%d,%d]}",
                t.x(), t.y(), t.z(), q.w(), q.x(), q.y(), q.z(), d.grasp.width, d.quality, d.voxel[0],
                d.voxel[1], d.voxel[2]);
  return buf;
}

}  // namespace voxgrasp
