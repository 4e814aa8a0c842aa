#include "voxgrasp/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <cstring>
#include <memory>
#include <numeric>

#include <nlohmann/json.hpp>

#include "voxgrasp/error.hpp"
#include "voxgrasp/io.hpp"

namespace voxgrasp::nn {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointMagic = "VGNCKPT1";

struct LayerSpec {
  const char* name;
  int in, out, kernel, stride, pad;
};

std::vector<LayerSpec> layer_specs(const ModelConfig& c) {
  const auto& e = c.encoder;
  const auto& d = c.decoder;
  return {
      {"enc0", 1, e[0], 5, 2, 2},   {"enc1", e[0], e[1], 3, 2, 1}, {"enc2", e[1], e[2], 3, 2, 1},
      {"dec0", e[2], d[0], 3, 1, 1}, {"dec1", d[0], d[1], 3, 1, 1}, {"dec2", d[1], d[2], 3, 1, 1},
      {"quality", d[2], 1, 5, 1, 2}, {"rotation", d[2], 4, 5, 1, 2}, {"width", d[2], 1, 5, 1, 2},
  };
}

enum { kQuality = 6, kRotation = 7, kWidth = 8 };

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::array<double, 4> wxyz(const Quat& q) { return {q.w(), q.x(), q.y(), q.z()}; }

template <class T>
double l2(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.data) s += double(v) * double(v);
  return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------- model

template <class T>
VgnModel<T>::VgnModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  for (int c : config.encoder)
    if (c < 1) throw InputError("model channel counts must be positive");
  for (int c : config.decoder)
    if (c < 1) throw InputError("model channel counts must be positive");
  std::size_t index = 0;
  for (const LayerSpec& s : layer_specs(config)) {
    Rng rng = substream(seed, "init", index++);
    const int fan_in = s.in * s.kernel * s.kernel * s.kernel;
    const double bound = std::sqrt(6.0 / fan_in);
    Tensor<T> w({s.out, s.in, s.kernel, s.kernel, s.kernel});
    for (T& v : w.data) v = static_cast<T>(uniform(rng, -bound, bound));
    layers_.push_back({s.name, make_leaf(std::move(w)), make_leaf(Tensor<T>({s.out})), s.stride, s.pad});
  }
}

template <class T>
std::size_t VgnModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight->value.size() + l.bias->value.size();
  return n;
}

template <class T>
void VgnModel<T>::zero_grad() {
  for (auto& l : layers_) {
    l.weight->grad = {};
    l.bias->grad = {};
  }
}

template <class T>
typename VgnModel<T>::Trunk VgnModel<T>::trunk(Tape<T>& tape, const Var<T>& input,
                                               Backend backend) const {
  const auto& sh = input->value.shape;
  if (sh.size() != 5 || sh[1] != 1 || sh[2] != sh[3] || sh[2] != sh[4] || sh[2] % 8 != 0)
    throw ShapeError("model input must be [B, 1, N, N, N] with N a multiple of 8, got " +
                     input->value.shape_string());
  auto conv = [&](const Var<T>& x, std::size_t i) {
    const auto& l = layers_[i];
    return relu(tape, conv3d(tape, x, l.weight, l.bias, l.stride, l.pad, backend));
  };
  Trunk t;
  t.encoded = conv(conv(conv(input, 0), 1), 2);
  Var<T> x = upsample2x(tape, conv(t.encoded, 3), backend);
  x = upsample2x(tape, conv(x, 4), backend);
  t.features = upsample2x(tape, conv(x, 5), backend);
  return t;
}

template <class T>
typename VgnModel<T>::Heads VgnModel<T>::heads_at(Tape<T>& tape, const Var<T>& features,
                                                  std::vector<kernels::VoxelRef> voxels) const {
  auto head = [&](std::size_t i) {
    const auto& l = layers_[i];
    return conv3d_at(tape, features, l.weight, l.bias, l.pad, voxels);
  };
  return {head(kQuality), normalize_rows(tape, head(kRotation)), head(kWidth)};
}

template <class T>
typename VgnModel<T>::Heads VgnModel<T>::heads_dense(Tape<T>& tape, const Var<T>& features,
                                                     Backend backend) const {
  auto head = [&](std::size_t i) {
    const auto& l = layers_[i];
    return conv3d(tape, features, l.weight, l.bias, 1, l.pad, backend);
  };
  return {head(kQuality), head(kRotation), head(kWidth)};
}

template <class T>
template <class U>
VgnModel<U> VgnModel<T>::cast() const {
  VgnModel<U> out(config_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto copy = [](const Tensor<T>& src, Tensor<U>& dst) {
      std::transform(src.data.begin(), src.data.end(), dst.data.begin(),
                     [](T v) { return static_cast<U>(v); });
    };
    copy(layers_[i].weight->value, out.layers_[i].weight->value);
    copy(layers_[i].bias->value, out.layers_[i].bias->value);
  }
  return out;
}

template class VgnModel<float>;
template class VgnModel<double>;
template VgnModel<double> VgnModel<float>::cast<double>() const;
template VgnModel<float> VgnModel<double>::cast<float>() const;
template VgnModel<float> VgnModel<float>::cast<float>() const;
template VgnModel<double> VgnModel<double>::cast<double>() const;

Quat GraspMap::rotation_at(std::size_t index) const {
  const std::size_t n3 = quality.size();
  return Quat(rotation[index], rotation[n3 + index], rotation[2 * n3 + index], rotation[3 * n3 + index]);
}

GraspMap predict(const VgnModel<float>& model, std::span<const float> values, int n, Backend backend) {
  if (n <= 0 || n % 8 != 0) throw ShapeError("resolution must be a positive multiple of 8");
  const std::size_t n3 = static_cast<std::size_t>(n) * n * n;
  if (values.size() != n3)
    throw ShapeError("volume has " + std::to_string(values.size()) + " voxels, expected " +
                     std::to_string(n3));
  Tensor<float> in({1, 1, n, n, n});
  std::copy(values.begin(), values.end(), in.data.begin());
  Tape<float> tape;
  const auto trunk = model.trunk(tape, make_leaf(std::move(in), false), backend);
  const auto heads = model.heads_dense(tape, trunk.features, backend);

  GraspMap map;
  map.resolution = n;
  map.quality.resize(n3);
  map.width.resize(n3);
  map.rotation.resize(4 * n3);
  const auto& q = heads.quality_logit->value.data;
  const auto& r = heads.rotation->value.data;
  const auto& w = heads.width->value.data;
  for (std::size_t i = 0; i < n3; ++i) {
    map.quality[i] = static_cast<float>(sigmoid(q[i]));
    map.width[i] = std::clamp(w[i], 0.0f, 1.0f);
    double ss = 0.0;
    for (int c = 0; c < 4; ++c) ss += double(r[c * n3 + i]) * r[c * n3 + i];
    const double norm = std::sqrt(ss);
    for (int c = 0; c < 4; ++c)
      map.rotation[c * n3 + i] =
          norm > 0.0 ? static_cast<float>(r[c * n3 + i] / norm) : (c == 0 ? 1.0f : 0.0f);
  }
  return map;
}

// ---------------------------------------------------------------- loss

double quat_loss(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  return 1.0 - std::abs(a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]);
}

double symmetric_rotation_loss(const std::array<double, 4>& predicted, const Quat& target) {
  return std::min(quat_loss(predicted, wxyz(target)), quat_loss(predicted, wxyz(symmetry_partner(target))));
}

double binary_cross_entropy(double p, int label) {
  constexpr double eps = 1e-12;
  return label ? -std::log(std::max(p, eps)) : -std::log(std::max(1.0 - p, eps));
}

template <class T>
Var<T> grasp_loss(Tape<T>& tape, const Var<T>& quality_logit, const Var<T>& rotation, const Var<T>& width,
                  const std::vector<LossTarget>& targets, LossBreakdown* breakdown) {
  const std::size_t m = targets.size();
  if (m == 0) throw InputError("empty batch");
  if (quality_logit->value.size() != m || width->value.size() != m || rotation->value.size() != 4 * m)
    throw ShapeError("loss inputs do not match " + std::to_string(m) + " targets");

  // Per-record gradients are computed alongside the loss, scaled at backward.
  std::vector<double> dz(m), dw(m), dr(4 * m, 0.0);
  LossBreakdown b;
  b.count = m;
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const LossTarget& t = targets[i];
    const double z = quality_logit->value.data[i];
    const int y = t.label ? 1 : 0;
    b.quality += softplus(z) - y * z;
    dz[i] = (sigmoid(z) - y) * inv;
    if ((z > 0.0) == (y == 1)) ++b.correct;
    if (!y) continue;

    std::array<double, 4> r;
    for (int c = 0; c < 4; ++c) r[c] = rotation->value.data[4 * i + c];
    const auto a = wxyz(t.rotation);
    const auto s = wxyz(symmetry_partner(t.rotation));
    const double la = quat_loss(r, a), ls = quat_loss(r, s);
    const auto& pick = la <= ls ? a : s;
    b.rotation += std::min(la, ls);
    const double dot = r[0] * pick[0] + r[1] * pick[1] + r[2] * pick[2] + r[3] * pick[3];
    const double sign = dot >= 0.0 ? 1.0 : -1.0;
    for (int c = 0; c < 4; ++c) dr[4 * i + c] = -sign * pick[c] * inv;

    const double e = double(width->value.data[i]) - t.width;
    b.width += e * e;
    dw[i] = 2.0 * e * inv;
  }
  b.total = (b.quality + b.rotation + b.width) * inv;
  b.quality *= inv;
  b.rotation *= inv;
  b.width *= inv;
  if (breakdown) *breakdown = b;

  auto node = make_leaf(Tensor<T>({1}, static_cast<T>(b.total)));
  node->inputs = {quality_logit, rotation, width};
  tape.record(node);
  Node<T>* self = node.get();
  node->backward = [self, dz = std::move(dz), dr = std::move(dr), dw = std::move(dw)]() {
    const double g = self->grad.data[0];
    auto add = [g](Node<T>& n, const std::vector<double>& d) {
      auto& dst = n.grad_buffer().data;
      for (std::size_t i = 0; i < d.size(); ++i) dst[i] += static_cast<T>(g * d[i]);
    };
    add(*self->inputs[0], dz);
    add(*self->inputs[1], dr);
    add(*self->inputs[2], dw);
  };
  return node;
}

template Var<float> grasp_loss<float>(Tape<float>&, const Var<float>&, const Var<float>&, const Var<float>&,
                                      const std::vector<LossTarget>&, LossBreakdown*);
template Var<double> grasp_loss<double>(Tape<double>&, const Var<double>&, const Var<double>&,
                                        const Var<double>&, const std::vector<LossTarget>&, LossBreakdown*);

// ---------------------------------------------------------------- training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InputError("learning_rate must be > 0");
  if (epochs < 0) throw InputError("epochs must be >= 0");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw InputError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw InputError("Adam epsilon must be > 0");
}

std::size_t TrainingSet::record_count() const {
  std::size_t n = 0;
  for (const auto& s : scenes) n += s.records.size();
  return n;
}

TrainingSet load_training_set(const DatasetPaths& paths, const GridFrame& frame, const GripperModel& gripper) {
  const DatasetManifest manifest = manifest_from_json(io::read_file(paths.manifest()));
  if (manifest.resolution != frame.resolution)
    throw ShapeError("dataset resolution " + std::to_string(manifest.resolution) +
                     " does not match the configured " + std::to_string(frame.resolution));
  if (!manifest.gripper_hash.empty() && manifest.gripper_hash != gripper_hash(gripper))
    throw InputError("dataset was generated for a different gripper");
  TrainingSet set;
  set.resolution = frame.resolution;
  set.max_width_voxels = gripper.max_width / frame.voxel_size();
  std::map<std::uint64_t, std::size_t> slot;
  for (const GraspRecord& r : read_records(paths.records())) {
    auto [it, inserted] = slot.emplace(r.scene_id, set.scenes.size());
    if (inserted) {
      SceneVolume s;
      s.scene_id = r.scene_id;
      const TsdfVolume v = read_tsdf(paths.volume(r.scene_id), frame);
      s.values.assign(v.values().begin(), v.values().end());
      set.scenes.push_back(std::move(s));
    }
    set.scenes[it->second].records.push_back(r);
  }
  return set;
}

template <class T>
Var<T> batch_loss(Tape<T>& tape, const VgnModel<T>& model, const TrainingSet& data,
                  const std::vector<std::pair<const std::vector<float>*, GraspRecord>>& items,
                  LossBreakdown* breakdown, Backend backend) {
  if (items.empty()) throw InputError("empty batch");
  const int n = data.resolution;
  const std::size_t n3 = static_cast<std::size_t>(n) * n * n;
  std::vector<const std::vector<float>*> grids;
  std::vector<kernels::VoxelRef> voxels;
  std::vector<LossTarget> targets;
  for (const auto& [grid, rec] : items) {
    if (grid->size() != n3) throw ShapeError("volume size does not match the dataset resolution");
    if (grids.empty() || grids.back() != grid) grids.push_back(grid);
    const auto v = rec.voxel();
    auto clampi = [n](int c) { return std::clamp(c, 0, n - 1); };
    voxels.push_back({static_cast<int>(grids.size()) - 1, clampi(v[2]), clampi(v[1]), clampi(v[0])});
    targets.push_back({rec.label, rec.quat(), rec.width / data.max_width_voxels});
  }
  Tensor<T> in({static_cast<int>(grids.size()), 1, n, n, n});
  for (std::size_t b = 0; b < grids.size(); ++b)
    std::transform(grids[b]->begin(), grids[b]->end(), in.data.begin() + b * n3,
                   [](float v) { return static_cast<T>(v); });
  const auto trunk = model.trunk(tape, make_leaf(std::move(in), false), backend);
  const auto heads = model.heads_at(tape, trunk.features, std::move(voxels));
  return grasp_loss(tape, heads.quality_logit, heads.rotation, heads.width, targets, breakdown);
}

template Var<float> batch_loss<float>(Tape<float>&, const VgnModel<float>&, const TrainingSet&,
                                      const std::vector<std::pair<const std::vector<float>*, GraspRecord>>&,
                                      LossBreakdown*, Backend);
template Var<double> batch_loss<double>(Tape<double>&, const VgnModel<double>&, const TrainingSet&,
                                        const std::vector<std::pair<const std::vector<float>*, GraspRecord>>&,
                                        LossBreakdown*, Backend);

namespace {

void accumulate(LossBreakdown& sum, const LossBreakdown& b) {
  const double k = static_cast<double>(b.count);
  sum.total += b.total * k;
  sum.quality += b.quality * k;
  sum.rotation += b.rotation * k;
  sum.width += b.width * k;
  sum.count += b.count;
  sum.correct += b.correct;
}

void finish(LossBreakdown& sum) {
  if (sum.count == 0) return;
  const double inv = 1.0 / static_cast<double>(sum.count);
  sum.total *= inv;
  sum.quality *= inv;
  sum.rotation *= inv;
  sum.width *= inv;
}

void adam_step(VgnModel<float>& model, AdamState& adam, const TrainConfig& c) {
  auto& layers = model.layers();
  if (adam.m.empty()) {
    for (const auto& l : layers) {
      for (const auto* p : {&l.weight, &l.bias}) {
        adam.m.emplace_back((*p)->value.size(), 0.0f);
        adam.v.emplace_back((*p)->value.size(), 0.0f);
      }
    }
  }
  ++adam.step;
  const double t = static_cast<double>(adam.step);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  std::size_t slot = 0;
  for (auto& l : layers) {
    for (auto* p : {&l.weight, &l.bias}) {
      Node<float>& node = **p;
      auto& m = adam.m[slot];
      auto& v = adam.v[slot];
      ++slot;
      if (node.grad.size() != node.value.size()) continue;  // untouched this batch
      for (std::size_t i = 0; i < node.value.size(); ++i) {
        const double g = node.grad.data[i];
        const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        node.value.data[i] -= static_cast<float>(c.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + c.epsilon));
      }
    }
  }
}

std::string weight_norms(const VgnModel<float>& model) {
  std::string s;
  char buf[96];
  for (const auto& l : model.layers()) {
    std::snprintf(buf, sizeof buf, "%s%s=%.4g", s.empty() ? "" : ", ", l.name.c_str(), l2(l.weight->value));
    s += buf;
  }
  return s;
}

}  // namespace

std::vector<EpochLog> train(VgnModel<float>& model, AdamState& adam, const TrainingSet& data,
                            const TrainConfig& config, int start_epoch,
                            const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (data.record_count() == 0) throw InputError("training set has no records");
  const int n = data.resolution;
  std::vector<EpochLog> logs;
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    Rng rng = substream(config.seed, "epoch", static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(data.scenes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    LossBreakdown sum;
    std::size_t batch_index = 0;
    std::vector<std::shared_ptr<const std::vector<float>>> keep;
    std::vector<std::pair<const std::vector<float>*, GraspRecord>> items;
    auto step = [&]() {
      Tape<float> tape;
      model.zero_grad();
      LossBreakdown b;
      const auto loss = batch_loss(tape, model, data, items, &b);
      if (!std::isfinite(b.total)) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "non-finite loss at epoch %d, batch %zu; weight norms: ", epoch + 1,
                      batch_index);
        throw TrainingDiverged(buf + weight_norms(model));
      }
      tape.backward(loss);
      adam_step(model, adam, config);
      accumulate(sum, b);
      ++batch_index;
      items.clear();
      keep.erase(keep.begin(), keep.end() - (keep.empty() ? 0 : 1));
    };

    for (std::size_t s : order) {
      const SceneVolume& scene = data.scenes[s];
      if (scene.records.empty()) continue;
      if (config.augment) {
        const Augmentation aug = sample_augmentation(rng, n, scene.records);
        keep.push_back(std::make_shared<const std::vector<float>>(augment_grid(scene.values, n, aug)));
        for (const GraspRecord& r : scene.records) {
          items.emplace_back(keep.back().get(), augment_record(r, n, aug));
          if (items.size() == static_cast<std::size_t>(config.batch_size)) step();
        }
      } else {
        for (const GraspRecord& r : scene.records) {
          items.emplace_back(&scene.values, r);
          if (items.size() == static_cast<std::size_t>(config.batch_size)) step();
        }
      }
    }
    if (!items.empty()) step();
    keep.clear();
    finish(sum);
    logs.push_back({epoch + 1, sum});
    if (on_epoch) on_epoch(logs.back());
  }
  return logs;
}

template <class T>
LossBreakdown evaluate(const VgnModel<T>& model, const TrainingSet& data, int batch_size) {
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  LossBreakdown sum;
  std::vector<std::pair<const std::vector<float>*, GraspRecord>> items;
  auto flush = [&]() {
    Tape<T> tape;
    LossBreakdown b;
    batch_loss(tape, model, data, items, &b);
    accumulate(sum, b);
    items.clear();
  };
  for (const auto& scene : data.scenes)
    for (const auto& r : scene.records) {
      items.emplace_back(&scene.values, r);
      if (items.size() == static_cast<std::size_t>(batch_size)) flush();
    }
  if (!items.empty()) flush();
  finish(sum);
  return sum;
}

template LossBreakdown evaluate<float>(const VgnModel<float>&, const TrainingSet&, int);
template LossBreakdown evaluate<double>(const VgnModel<double>&, const TrainingSet&, int);

// ---------------------------------------------------------------- checkpoints

void save_checkpoint(const std::filesystem::path& path, const VgnModel<float>& model, const AdamState* adam,
                     int epochs_done, const std::string& config_hash) {
  std::string blob;
  json tensors = json::array();
  std::size_t offset = 0;
  auto put_tensor = [&](const std::string& name, const std::vector<int>& shape, const std::vector<float>& v) {
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"count", v.size()}});
    for (float f : v) io::put(blob, f);
    offset += v.size();
  };
  const auto& layers = model.layers();
  for (const auto& l : layers) {
    put_tensor(l.name + ".weight", l.weight->value.shape, l.weight->value.data);
    put_tensor(l.name + ".bias", l.bias->value.shape, l.bias->value.data);
  }
  const bool has_adam = adam && !adam->m.empty();
  if (has_adam) {
    if (adam->m.size() != 2 * layers.size() || adam->v.size() != adam->m.size())
      throw InputError("optimizer state does not match the model");
    for (const char* which : {"adam_m", "adam_v"}) {
      const auto& st = std::string(which) == "adam_m" ? adam->m : adam->v;
      for (std::size_t i = 0; i < st.size(); ++i) {
        const auto& l = layers[i / 2];
        const auto& shape = i % 2 ? l.bias->value.shape : l.weight->value.shape;
        put_tensor(std::string(which) + "." + l.name + (i % 2 ? ".bias" : ".weight"), shape, st[i]);
      }
    }
  }
  const auto blob_path = path.string() + ".bin";
  json j = {
      {"magic", kCheckpointMagic},
      {"model", {{"encoder", model.config().encoder}, {"decoder", model.config().decoder}}},
      {"config_hash", config_hash},
      {"epochs_done", epochs_done},
      {"adam_step", adam ? adam->step : 0},
      {"has_adam", has_adam},
      {"blob", std::filesystem::path(blob_path).filename().string()},
      {"blob_floats", offset},
      {"tensors", tensors},
  };
  io::write_file_atomic(blob_path, blob);
  io::write_file_atomic(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto bad = [](const std::string& why) { return FormatError("bad checkpoint: " + why); };
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw bad(e.what());
  }
  try {
    if (j.value("magic", "") != kCheckpointMagic) throw bad("wrong magic");
    ModelConfig cfg;
    cfg.encoder = j.at("model").at("encoder").get<std::array<int, 3>>();
    cfg.decoder = j.at("model").at("decoder").get<std::array<int, 3>>();
    Checkpoint ck{VgnModel<float>(cfg), std::nullopt, j.at("epochs_done").get<int>(),
                  j.at("config_hash").get<std::string>()};
    const auto blob_path = path.parent_path() / j.at("blob").get<std::string>();
    if (!std::filesystem::exists(blob_path)) throw bad("missing weight file " + blob_path.string());
    const std::string blob = io::read_file(blob_path);
    const std::size_t floats = j.at("blob_floats").get<std::size_t>();
    if (blob.size() != floats * sizeof(float)) throw bad("weight file size does not match the manifest");

    std::map<std::string, std::pair<std::vector<int>, std::size_t>> index;
    for (const auto& t : j.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<int>>();
      const auto off = t.at("offset").get<std::size_t>();
      const auto count = t.at("count").get<std::size_t>();
      if (shape_volume(shape) != count || off + count > floats) throw bad("inconsistent tensor " + t.value("name", "?"));
      index[t.at("name").get<std::string>()] = {shape, off};
    }
    auto fill = [&](const std::string& name, const std::vector<int>& shape, std::vector<float>& dst) {
      auto it = index.find(name);
      if (it == index.end()) throw bad("missing tensor " + name);
      if (it->second.first != shape) throw bad("shape mismatch for " + name);
      dst.resize(shape_volume(shape));
      std::memcpy(dst.data(), blob.data() + it->second.second * sizeof(float), dst.size() * sizeof(float));
    };
    auto& layers = ck.model.layers();
    for (auto& l : layers) {
      fill(l.name + ".weight", l.weight->value.shape, l.weight->value.data);
      fill(l.name + ".bias", l.bias->value.shape, l.bias->value.data);
    }
    if (j.at("has_adam").get<bool>()) {
      AdamState a;
      a.step = j.at("adam_step").get<std::uint64_t>();
      for (const char* which : {"adam_m", "adam_v"}) {
        auto& st = std::string(which) == "adam_m" ? a.m : a.v;
        for (const auto& l : layers) {
          st.emplace_back();
          fill(std::string(which) + "." + l.name + ".weight", l.weight->value.shape, st.back());
          st.emplace_back();
          fill(std::string(which) + "." + l.name + ".bias", l.bias->value.shape, st.back());
        }
      }
      ck.adam = std::move(a);
    }
    return ck;
  } catch (const json::exception& e) {
    throw bad(e.what());
  } catch (const InputError& e) {
    throw bad(e.what());
  }
}

}  // namespace voxgrasp::nn
