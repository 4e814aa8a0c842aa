#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "voxgrasp/detect.hpp"
#include "voxgrasp/error.hpp"

using namespace voxgrasp;
using testing::at;
using testing::brute_force_nms;
using testing::dense_smooth;

namespace {

nn::GraspMap flat_map(int n, const std::vector<float>& quality, Rng& rng) {
  nn::GraspMap map;
  map.resolution = n;
  const std::size_t cells = std::size_t(n) * n * n;
  map.quality = quality;
  map.rotation.resize(4 * cells);
  map.width.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const Quat q = testing::random_quat(rng);
    map.rotation[i] = float(q.w());
    map.rotation[cells + i] = float(q.x());
    map.rotation[2 * cells + i] = float(q.y());
    map.rotation[3 * cells + i] = float(q.z());
    map.width[i] = float(uniform(rng, 0, 1));
  }
  return map;
}

std::vector<float> bumps(int n, const std::vector<std::array<int, 3>>& centers, double sigma = 1.5) {
  std::vector<float> q(std::size_t(n) * n * n, 0.0f);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        for (const auto& c : centers) {
          const double d2 = (i - c[0]) * (i - c[0]) + (j - c[1]) * (j - c[1]) + (k - c[2]) * (k - c[2]);
          q[at(n, i, j, k)] = std::max(q[at(n, i, j, k)], float(0.97 * std::exp(-d2 / (2 * sigma * sigma))));
        }
  return q;
}

}  // namespace

TEST_CASE("smoothing matches a dense 3D convolution") {
  Rng rng(1);
  for (int n : {8, 12, 16}) {
    for (double sigma : {0.6, 1.0, 1.7}) {
      const auto q = testing::random_floats(rng, std::size_t(n) * n * n, 0.0, 1.0);
      const auto ref = dense_smooth(q, n, sigma);
      for (auto backend : {nn::Backend::parallel, nn::Backend::serial}) {
        const auto got = smooth_quality(q, n, sigma, backend);
        double worst = 0;
        for (std::size_t i = 0; i < q.size(); ++i) worst = std::max(worst, double(std::abs(got[i] - ref[i])));
        CHECK(worst < 1e-5);
      }
    }
  }
}

TEST_CASE("smoothing a constant or a delta") {
  const int n = 12;
  const std::vector<float> flat(n * n * n, 0.37f);
  for (float v : smooth_quality(flat, n, 1.0)) CHECK(std::abs(v - 0.37f) < 1e-6);

  std::vector<float> delta(n * n * n, 0.0f);
  delta[at(n, 6, 6, 6)] = 1.0f;
  double sum1d = 0;
  for (int d = -3; d <= 3; ++d) sum1d += std::exp(-d * d / 2.0);
  const double peak = 1.0 / sum1d;
  CHECK(smooth_quality(delta, n, 1.0)[at(n, 6, 6, 6)] == doctest::Approx(peak * peak * peak).epsilon(1e-6));
}

TEST_CASE("NMS matches brute-force enumeration on random volumes") {
  Rng rng(2);
  for (int n : {8, 12, 16}) {
    for (int window : {3, 5, 7}) {
      auto q = testing::random_floats(rng, std::size_t(n) * n * n, 0.0, 1.0);
      // plateaus exercise the index tie-break
      for (int t = 0; t < 50; ++t) q[std::size_t(uniform_int(rng, 0, int(q.size()) - 1))] = 0.95f;
      for (double eps : {0.5, 0.9}) CHECK(nms_peaks(q, n, eps, window) == brute_force_nms(q, n, eps, window));
    }
  }
}

TEST_CASE("NMS peaks form an antichain and shrink as epsilon grows") {
  Rng rng(3);
  const int n = 16, window = 3;
  const auto q = dense_smooth(testing::random_floats(rng, std::size_t(n) * n * n, 0.0, 1.0), n, 0.7);
  std::vector<std::size_t> prev;
  bool first = true;
  for (double eps = 0.3; eps < 0.8; eps += 0.05) {
    const auto peaks = nms_peaks(q, n, eps, window);
    for (std::size_t a = 0; a < peaks.size(); ++a)
      for (std::size_t b = a + 1; b < peaks.size(); ++b) {
        const int di = int(peaks[a] % n) - int(peaks[b] % n), dj = int(peaks[a] / n % n) - int(peaks[b] / n % n),
                  dk = int(peaks[a] / (n * n)) - int(peaks[b] / (n * n));
        CHECK(std::max({std::abs(di), std::abs(dj), std::abs(dk)}) > window / 2);
      }
    if (!first) CHECK(std::includes(prev.begin(), prev.end(), peaks.begin(), peaks.end()));
    prev = peaks;
    first = false;
  }
}

TEST_CASE("masking follows the admissibility rule") {
  GridFrame frame;
  frame.resolution = 8;
  const std::size_t cells = 512;
  const double tau = 4 * frame.voxel_size();
  std::vector<float> values(cells, 1.0f), weights(cells, 1.0f);
  values[at(8, 2, 2, 2)] = 0.0f;                             // on the surface
  values[at(8, 3, 2, 2)] = -0.3f;                            // just inside
  values[at(8, 4, 2, 2)] = float(frame.voxel_size() / tau);  // one voxel out
  weights[at(8, 5, 2, 2)] = 0.0f;
  values[at(8, 5, 2, 2)] = 0.0f;  // unobserved
  const TsdfVolume v(frame, tau, values, weights);
  const std::vector<float> q(cells, 0.8f);
  const auto m = mask_quality(q, v);
  CHECK(m[at(8, 2, 2, 2)] == 0.8f);
  CHECK(m[at(8, 3, 2, 2)] == 0.8f);
  CHECK(m[at(8, 4, 2, 2)] == 0.8f);
  CHECK(m[at(8, 5, 2, 2)] == 0.0f);
  CHECK(m[at(8, 0, 0, 0)] == 0.0f);  // free space at the truncation distance

  const TsdfVolume unseen(frame);
  for (float x : mask_quality(q, unseen)) CHECK(x == 0.0f);
  CHECK_THROWS_AS(mask_quality(std::vector<float>(10), v), ShapeError);
}

TEST_CASE("bump fixtures give one detection per bump at the peak") {
  GridFrame frame;
  frame.resolution = 16;
  Rng rng(4);
  DetectionConfig cfg;
  cfg.epsilon = 0.9;
  {
    const auto q = bumps(16, {{5, 6, 7}});
    const auto dets = select_grasps(q, flat_map(16, q, rng), cfg, frame, 0.08);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].voxel == std::array<int, 3>{5, 6, 7});
  }
  {
    const auto q = bumps(16, {{3, 3, 3}, {11, 11, 11}});
    CHECK(select_grasps(q, flat_map(16, q, rng), cfg, frame, 0.08).size() == 2);
  }
}

TEST_CASE("selected grasps carry the map values and round-trip to their voxels") {
  GridFrame frame;
  frame.resolution = 16;
  Rng rng(5);
  const auto q = testing::random_floats(rng, 16 * 16 * 16, 0.0, 1.0);
  const auto map = flat_map(16, q, rng);
  DetectionConfig cfg;
  cfg.epsilon = 0.6;
  cfg.max_detections = 1000;
  const auto dets = select_grasps(q, map, cfg, frame, 0.08);
  REQUIRE(dets.size() > 5);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (d) CHECK(dets[d - 1].quality >= dets[d].quality);
    const auto& v = dets[d].voxel;
    const std::size_t idx = at(16, v[0], v[1], v[2]);
    const Vec3 back = frame.world_to_voxel(dets[d].grasp.pose.translation);
    CHECK((back - Vec3(v[0] + 0.5, v[1] + 0.5, v[2] + 0.5)).norm() < 1e-9);
    for (int a = 0; a < 3; ++a) CHECK(int(std::floor(back[a])) == v[a]);
    CHECK(dets[d].grasp.width == doctest::Approx(map.width[idx] * 0.08));
    CHECK(quat_distance(dets[d].grasp.pose.rotation, map.rotation_at(idx)) < 1e-6);
  }
  cfg.max_detections = 3;
  const auto few = select_grasps(q, map, cfg, frame, 0.08);
  REQUIRE(few.size() == 3);
  for (int d = 0; d < 3; ++d) CHECK(few[d].voxel == dets[d].voxel);
}

TEST_CASE("plan is deterministic, timed, and finds nothing in an empty volume") {
  const nn::VgnModel<float> model({}, 3);
  const DetectionConfig cfg;
  const TsdfVolume empty;
  const PlanResult r = plan(empty, model, cfg, 0.08);
  CHECK(r.detections.empty());
  CHECK(r.planning_ms > 0.0);

  GridFrame frame;
  Rng rng(6);
  auto values = testing::random_floats(rng, frame.voxel_count(), -0.2, 0.2);
  const TsdfVolume noisy(frame, 0.0, values, std::vector<float>(frame.voxel_count(), 1.0f));
  DetectionConfig loose = cfg;
  loose.epsilon = 0.5;
  const PlanResult a = plan(noisy, model, loose, 0.08), b = plan(noisy, model, loose, 0.08);
  REQUIRE(a.detections.size() == b.detections.size());
  for (std::size_t i = 0; i < a.detections.size(); ++i) CHECK(detection_to_json(a.detections[i]) == detection_to_json(b.detections[i]));

  GridFrame odd;
  odd.resolution = 12;
  CHECK_THROWS_AS(plan(TsdfVolume(odd), model, cfg, 0.08), ShapeError);
}

TEST_CASE("detection config validation") {
  DetectionConfig c;
  CHECK_NOTHROW(c.validate());
  c.nms_window = 4;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.sigma = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.max_detections = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
}
