#include "voxgrasp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "voxgrasp/error.hpp"
#include "voxgrasp/io.hpp"

namespace voxgrasp {

using nlohmann::json;

namespace {

constexpr char kRecordMagic[8] = {'V', 'G', 'N', 'R', 'E', 'C', '0', '1'};
constexpr std::size_t kRecordBytes = 44;
constexpr std::uint64_t kSceneBlock = 16;

// Middle of the longest cyclic run of successes among the six orientations.
int pick_orientation(const std::array<bool, 6>& ok) {
  int best_start = -1, best_len = 0;
  for (int start = 0; start < 6; ++start) {
    if (!ok[start] || ok[(start + 5) % 6]) continue;  // runs start after a failure
    int len = 0;
    while (len < 6 && ok[(start + len) % 6]) ++len;
    if (len > best_len) {
      best_len = len;
      best_start = start;
    }
  }
  if (best_start < 0) return ok[0] ? 2 : -1;  // all six succeed
  return (best_start + (best_len - 1) / 2) % 6;
}

std::vector<float> rotate_quarter(const std::vector<float>& grid, int n) {
  std::vector<float> out(grid.size());
  const std::size_t nn = static_cast<std::size_t>(n);
  for (std::size_t k = 0; k < nn; ++k)
    for (std::size_t j = 0; j < nn; ++j)
      for (std::size_t i = 0; i < nn; ++i)
        out[(k * nn + i) * nn + (nn - 1 - j)] = grid[(k * nn + j) * nn + i];
  return out;
}

}  // namespace

std::array<int, 3> GraspRecord::voxel() const {
  return {static_cast<int>(std::floor(position[0])), static_cast<int>(std::floor(position[1])),
          static_cast<int>(std::floor(position[2]))};
}

SceneSample generate_scene_sample(std::uint64_t seed, std::uint64_t scene_id,
                                  const DatasetConfig& config,
                                  const std::vector<PrimitiveSpec>& pool) {
  const GridFrame& frame = config.frame;
  Rng rng = substream(seed, "scene", scene_id);
  SceneSample out;
  out.scene_id = scene_id;
  out.scene = uniform(rng, 0.0, 1.0) < config.pile_fraction
                  ? generate_pile(rng, pool, frame.length, config.pile)
                  : generate_packed(rng, pool, frame.length, config.packed);
  out.scene.seed = substream_seed(seed, "scene", scene_id);
  const Scene scene(out.scene);

  out.views = uniform_int(rng, 1, config.max_views);
  std::vector<DepthImage> images;
  for (int v = 0; v < out.views; ++v) {
    const ViewpointSample view = sample_viewpoint(rng, frame.length, frame.table_center_world());
    images.push_back(render_depth(scene, view.camera_pose(), config.camera));
  }
  out.volume = fuse(frame, images, config.truncation);

  std::vector<SurfacePoint> points;
  try {
    points = out.volume.extract_surface_points(config.points_per_scene, rng);
  } catch (const NoSurfaceError&) {
    return out;
  }
  const auto candidates = sample_candidates(points, config.oracle.gripper, rng);
  for (std::size_t p = 0; p < points.size(); ++p) {
    const GraspCandidate& first = candidates[p * 6];
    if (!frame.contains_world(first.pose.translation)) continue;
    const Vec3 c = frame.world_to_voxel(first.pose.translation);
    if (!out.volume.grasp_admissible(static_cast<int>(c.x()), static_cast<int>(c.y()),
                                     static_cast<int>(c.z())))
      continue;
    std::array<bool, 6> ok{};
    std::array<double, 6> widths{};
    for (int k = 0; k < 6; ++k) {
      const GraspCandidate& cand = candidates[p * 6 + k];
      const GraspOutcome o = evaluate_grasp(scene, cand.pose, cand.width, config.oracle);
      ok[k] = o.label == GraspLabel::success;
      widths[k] = o.width_at_contact;
    }
    const int pick = pick_orientation(ok);
    const GraspCandidate& chosen = candidates[p * 6 + std::max(pick, 0)];
    const double width = pick >= 0 ? widths[pick] : chosen.width;
    const VoxelGrasp vg = world_to_voxel(frame, {chosen.pose, width});
    GraspRecord r;
    r.scene_id = scene_id;
    r.position = {static_cast<float>(vg.position.x()), static_cast<float>(vg.position.y()),
                  static_cast<float>(vg.position.z())};
    r.rotation = {static_cast<float>(vg.orientation.w()), static_cast<float>(vg.orientation.x()),
                  static_cast<float>(vg.orientation.y()), static_cast<float>(vg.orientation.z())};
    r.width = static_cast<float>(vg.width);
    r.label = pick >= 0 ? 1 : 0;
    out.records.push_back(r);
  }
  return out;
}

std::vector<GraspRecord> balance(const std::vector<GraspRecord>& records, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < records.size(); ++i) (records[i].label ? pos : neg).push_back(i);
  std::vector<std::size_t>& major = pos.size() > neg.size() ? pos : neg;
  const std::size_t keep = std::min(pos.size(), neg.size());
  Rng rng = substream(seed, "balance");
  // Fisher-Yates with our own draws so the result is library independent.
  for (std::size_t i = major.size(); i > 1; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(major[i - 1], major[j]);
  }
  major.resize(keep);
  std::vector<char> kept(records.size(), 0);
  for (std::size_t i : pos) kept[i] = 1;
  for (std::size_t i : neg) kept[i] = 1;
  std::vector<GraspRecord> out;
  out.reserve(2 * keep);
  for (std::size_t i = 0; i < records.size(); ++i)
    if (kept[i]) out.push_back(records[i]);
  return out;
}

DatasetBuild build_dataset(std::uint64_t seed, std::uint64_t scene_count, const DatasetConfig& config,
                           const SceneSink& sink) {
  if (scene_count < 1) throw InputError("scene count must be at least 1");
  config.frame.validate();
  config.oracle.gripper.validate();
  const auto pool = make_object_pool(PoolSplit::train, config.pool_size, seed);

  DatasetBuild build;
  std::vector<GraspRecord> all;
  for (std::uint64_t first = 0; first < scene_count; first += kSceneBlock) {
    const std::uint64_t count = std::min(kSceneBlock, scene_count - first);
    std::vector<SceneSample> block(count);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(count); ++i)
      block[i] = generate_scene_sample(seed, first + i, config, pool);
    for (const auto& s : block) {
      if (s.records.empty()) ++build.manifest.skipped_scenes;
      all.insert(all.end(), s.records.begin(), s.records.end());
      if (sink) sink(s);
    }
  }
  build.records = balance(all, seed);

  DatasetManifest& m = build.manifest;
  m.count = build.records.size();
  for (const auto& r : build.records) (r.label ? m.positives : m.negatives) += 1;
  m.scenes = scene_count;
  m.resolution = config.frame.resolution;
  m.length = config.frame.length;
  m.gripper_hash = gripper_hash(config.oracle.gripper);
  m.seed = seed;
  m.points_per_scene = config.points_per_scene;
  return build;
}

std::vector<float> augment_grid(const std::vector<float>& grid, int n, const Augmentation& aug) {
  std::vector<float> out = grid;
  for (int t = 0; t < ((aug.quarter_turns % 4) + 4) % 4; ++t) out = rotate_quarter(out, n);
  if (aug.z_shift != 0) {
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    std::vector<float> shifted(out.size(), 0.0f);
    for (int k = 0; k < n; ++k) {
      const int dst = k + aug.z_shift;
      if (dst < 0 || dst >= n) continue;
      std::copy_n(out.begin() + static_cast<std::ptrdiff_t>(k * plane), plane,
                  shifted.begin() + static_cast<std::ptrdiff_t>(dst * plane));
    }
    out = std::move(shifted);
  }
  return out;
}

GraspRecord augment_record(const GraspRecord& record, int n, const Augmentation& aug) {
  GraspRecord r = record;
  Vec3 p(r.position[0], r.position[1], r.position[2]);
  Quat q = r.quat();
  const int turns = ((aug.quarter_turns % 4) + 4) % 4;
  for (int t = 0; t < turns; ++t) {
    p = Vec3(n - p.y(), p.x(), p.z());
    q = rotation_z(std::numbers::pi / 2) * q;
  }
  p.z() += aug.z_shift;
  r.position = {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())};
  if (turns > 0) {
    q.normalize();
    r.rotation = {static_cast<float>(q.w()), static_cast<float>(q.x()), static_cast<float>(q.y()),
                  static_cast<float>(q.z())};
  }
  return r;
}

Augmentation sample_augmentation(Rng& rng, int n, const std::vector<GraspRecord>& records) {
  Augmentation aug;
  aug.quarter_turns = uniform_int(rng, 0, 3);
  const int range = n / 8;
  for (int attempt = 0; attempt < 32; ++attempt) {
    const int s = uniform_int(rng, -range, range);
    const bool fits = std::all_of(records.begin(), records.end(), [&](const GraspRecord& r) {
      const float z = r.position[2] + static_cast<float>(s);
      return z >= 0.0f && z < static_cast<float>(n);
    });
    if (fits) {
      aug.z_shift = s;
      return aug;
    }
  }
  return aug;
}

std::pair<GraspRecord, TsdfVolume> augment(const GraspRecord& record, const TsdfVolume& volume,
                                           Rng& rng) {
  const int n = volume.resolution();
  const Augmentation aug = sample_augmentation(rng, n, {record});
  const std::vector<float> values(volume.values().begin(), volume.values().end());
  const std::vector<float> weights(volume.weights().begin(), volume.weights().end());
  return {augment_record(record, n, aug),
          TsdfVolume(volume.frame(), volume.truncation(), augment_grid(values, n, aug),
                     augment_grid(weights, n, aug))};
}

std::array<std::uint64_t, 18> grasp_angle_histogram(const std::vector<GraspRecord>& records,
                                                    const GridFrame& frame) {
  std::array<std::uint64_t, 18> bins{};
  std::uint64_t positives = 0;
  const Quat volume_to_world = frame.world_to_volume.rotation.conjugate();
  for (const auto& r : records) {
    if (!r.label) continue;
    ++positives;
    const Vec3 z = (volume_to_world * r.quat().normalized()) * Vec3::UnitZ();
    const double deg = std::acos(std::clamp(-z.z(), -1.0, 1.0)) * 180.0 / std::numbers::pi;
    bins[std::min<std::size_t>(17, static_cast<std::size_t>(deg / 10.0))] += 1;
  }
  if (positives == 0) throw InputError("angle histogram needs at least one positive record");
  return bins;
}

void write_records(const std::filesystem::path& path, const std::vector<GraspRecord>& records) {
  std::string out;
  out.reserve(16 + records.size() * kRecordBytes);
  out.append(kRecordMagic, 8);
  io::put<std::uint64_t>(out, records.size());
  for (const auto& r : records) {
    io::put(out, r.scene_id);
    for (float v : r.position) io::put(out, v);
    for (float v : r.rotation) io::put(out, v);
    io::put(out, r.width);
    io::put(out, r.label);
    out.append(3, '\0');
  }
  io::write_file_atomic(path, out);
}

std::vector<GraspRecord> read_records(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  io::Reader in(data, path.string());
  if (in.take(8) != std::string_view(kRecordMagic, 8)) throw FormatError(path.string() + ": bad records magic");
  const auto count = in.get<std::uint64_t>();
  if (count > in.remaining() / kRecordBytes || count * kRecordBytes != in.remaining())
    throw FormatError(path.string() + ": record count does not match file size");
  std::vector<GraspRecord> records(count);
  for (auto& r : records) {
    r.scene_id = in.get<std::uint64_t>();
    for (float& v : r.position) v = in.get<float>();
    for (float& v : r.rotation) v = in.get<float>();
    r.width = in.get<float>();
    r.label = in.get<std::uint8_t>();
    in.take(3);
  }
  return records;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j = {{"count", m.count},
            {"positives", m.positives},
            {"negatives", m.negatives},
            {"scenes", m.scenes},
            {"skipped_scenes", m.skipped_scenes},
            {"resolution", m.resolution},
            {"length", m.length},
            {"gripper_hash", m.gripper_hash},
            {"config_hash", m.config_hash},
            {"seed", m.seed},
            {"points_per_scene", m.points_per_scene},
            {"width_units", "normalized by max_width / voxel_size at training time"}};
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    DatasetManifest m;
    m.count = j.at("count");
    m.positives = j.at("positives");
    m.negatives = j.at("negatives");
    m.scenes = j.at("scenes");
    m.skipped_scenes = j.value("skipped_scenes", std::uint64_t{0});
    m.resolution = j.at("resolution");
    m.length = j.at("length");
    m.gripper_hash = j.at("gripper_hash");
    m.config_hash = j.value("config_hash", std::string());
    m.seed = j.at("seed");
    m.points_per_scene = j.at("points_per_scene");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
}

std::string digest_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_name(bytes)));
  return buf;
}

std::string gripper_hash(const GripperModel& g) {
  const json j = {{"max_width", g.max_width},
                  {"finger_depth", g.finger_depth},
                  {"finger_thickness", g.finger_thickness},
                  {"palm_depth", g.palm_depth}};
  return digest_hex(j.dump());
}

std::filesystem::path DatasetPaths::volume(std::uint64_t scene_id) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu.tsdf", static_cast<unsigned long long>(scene_id));
  return root / "volumes" / buf;
}

std::filesystem::path DatasetPaths::scene(std::uint64_t scene_id) const {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%06llu.scene.json", static_cast<unsigned long long>(scene_id));
  return root / "scenes" / buf;
}

}  // namespace voxgrasp
