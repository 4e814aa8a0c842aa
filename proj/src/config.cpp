#include "voxgrasp/config.hpp"

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "voxgrasp/error.hpp"
#include "voxgrasp/io.hpp"

namespace voxgrasp {

using nlohmann::json;

namespace {

// Reads a JSON object section, rejecting keys the caller never asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError("config: '" + path_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw InputError("config: unknown key '" + name(k) + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InputError("config: '" + name(key) + "' has the wrong type");
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, name(key));
  }

 private:
  std::string name(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const char* key, const char* what) {
  if (!ok) throw InputError(std::string("config: '") + key + "' " + what);
}

}  // namespace

void Config::validate() const {
  require(frame.length > 0 && std::isfinite(frame.length), "workspace.length", "must be > 0");
  require(frame.resolution > 0 && frame.resolution % 8 == 0, "workspace.resolution", "must be a positive multiple of 8");
  require(truncation_voxels > 0, "workspace.truncation_voxels", "must be > 0");
  gripper.validate();
  require(friction > 0, "oracle.friction", "must be > 0");
  require(approach_distance >= 0, "oracle.approach_distance", "must be >= 0");
  require(points_per_scene > 0, "dataset.points_per_scene", "must be > 0");
  require(pile_fraction >= 0 && pile_fraction <= 1, "dataset.pile_fraction", "must lie in [0, 1]");
  require(max_views >= 1, "dataset.max_views", "must be >= 1");
  require(pool_size >= 1, "dataset.pool_size", "must be >= 1");
  for (int c : model.encoder) require(c > 0, "model.encoder", "channels must be > 0");
  for (int c : model.decoder) require(c > 0, "model.decoder", "channels must be > 0");
  train.validate();
  detection.validate();
  require(m >= 0, "bench.m", "must be >= 0");
  require(rounds >= 1, "bench.rounds", "must be >= 1");
}

OracleConfig Config::oracle_config() const {
  OracleConfig o;
  o.gripper = gripper;
  o.friction = friction;
  o.approach_distance = approach_distance;
  return o;
}

DatasetConfig Config::dataset_config() const {
  DatasetConfig d;
  d.frame = frame;
  d.truncation = truncation_voxels * frame.voxel_size();
  d.oracle = oracle_config();
  d.points_per_scene = points_per_scene;
  d.pile_fraction = pile_fraction;
  d.max_views = max_views;
  d.pool_size = pool_size;
  return d;
}

BenchConfig Config::bench_config() const {
  BenchConfig b;
  b.scenario = scenario;
  b.m = m;
  b.rounds = rounds;
  b.policy = policy;
  b.detection = detection;
  b.oracle = oracle_config();
  b.frame = frame;
  b.truncation = truncation_voxels * frame.voxel_size();
  b.pool_size = pool_size;
  return b;
}

nn::TrainConfig Config::train_config() const {
  nn::TrainConfig t = train;
  t.seed = seed;
  return t;
}

Config config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("config_version"))
    throw InputError("config: missing 'config_version'");
  Config c;
  {
    Section root(j, "");
    int version = 0;
    root.get("config_version", version);
    if (version != kConfigVersion)
      throw InputError("config: unsupported config_version " + std::to_string(version));
    root.get("seed", c.seed);
    {
      auto s = root.sub("workspace");
      s.get("length", c.frame.length);
      s.get("resolution", c.frame.resolution);
      s.get("truncation_voxels", c.truncation_voxels);
    }
    {
      auto s = root.sub("gripper");
      s.get("max_width", c.gripper.max_width);
      s.get("finger_depth", c.gripper.finger_depth);
      s.get("finger_thickness", c.gripper.finger_thickness);
      s.get("palm_depth", c.gripper.palm_depth);
    }
    {
      auto s = root.sub("oracle");
      s.get("friction", c.friction);
      s.get("approach_distance", c.approach_distance);
    }
    {
      auto s = root.sub("dataset");
      s.get("scenes", c.scenes);
      s.get("points_per_scene", c.points_per_scene);
      s.get("pile_fraction", c.pile_fraction);
      s.get("max_views", c.max_views);
      s.get("pool_size", c.pool_size);
    }
    {
      auto s = root.sub("model");
      s.get("encoder", c.model.encoder);
      s.get("decoder", c.model.decoder);
    }
    {
      auto s = root.sub("train");
      s.get("learning_rate", c.train.learning_rate);
      s.get("epochs", c.train.epochs);
      s.get("batch_size", c.train.batch_size);
      s.get("beta1", c.train.beta1);
      s.get("beta2", c.train.beta2);
      s.get("adam_epsilon", c.train.epsilon);
      s.get("augment", c.train.augment);
    }
    {
      auto s = root.sub("detection");
      s.get("sigma", c.detection.sigma);
      s.get("epsilon", c.detection.epsilon);
      s.get("nms_window", c.detection.nms_window);
      s.get("max_detections", c.detection.max_detections);
    }
    {
      auto s = root.sub("bench");
      std::string scenario = to_string(c.scenario), policy = to_string(c.policy);
      s.get("scenario", scenario);
      s.get("policy", policy);
      s.get("m", c.m);
      s.get("rounds", c.rounds);
      c.scenario = scenario_from_string(scenario);
      c.policy = policy_from_string(policy);
    }
  }
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) { return config_from_json(io::read_file(path)); }

std::string config_to_json(const Config& c) {
  json j = {
      {"config_version", kConfigVersion},
      {"seed", c.seed},
      {"workspace",
       {{"length", c.frame.length}, {"resolution", c.frame.resolution}, {"truncation_voxels", c.truncation_voxels}}},
      {"gripper",
       {{"max_width", c.gripper.max_width},
        {"finger_depth", c.gripper.finger_depth},
        {"finger_thickness", c.gripper.finger_thickness},
        {"palm_depth", c.gripper.palm_depth}}},
      {"oracle", {{"friction", c.friction}, {"approach_distance", c.approach_distance}}},
      {"dataset",
       {{"scenes", c.scenes},
        {"points_per_scene", c.points_per_scene},
        {"pile_fraction", c.pile_fraction},
        {"max_views", c.max_views},
        {"pool_size", c.pool_size}}},
      {"model", {{"encoder", c.model.encoder}, {"decoder", c.model.decoder}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"adam_epsilon", c.train.epsilon},
        {"augment", c.train.augment}}},
      {"detection",
       {{"sigma", c.detection.sigma},
        {"epsilon", c.detection.epsilon},
        {"nms_window", c.detection.nms_window},
        {"max_detections", c.detection.max_detections}}},
      {"bench",
       {{"scenario", to_string(c.scenario)}, {"policy", to_string(c.policy)}, {"m", c.m}, {"rounds", c.rounds}}},
  };
  return j.dump(2) + "\n";
}

std::string config_hash(const Config& config) { return digest_hex(config_to_json(config)); }

}  // namespace voxgrasp
