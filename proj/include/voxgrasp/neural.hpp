#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "voxgrasp/dataset.hpp"
#include "voxgrasp/tensor.hpp"

namespace voxgrasp::nn {

/// Channel widths of the three encoder and three decoder layers. Kernels are
/// fixed: encoder 5/3/3 (stride 2), decoder 3, heads 5.
struct ModelConfig {
  std::array<int, 3> encoder{16, 32, 64};
  std::array<int, 3> decoder{64, 32, 16};

  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct Layer {
  std::string name;
  Var<T> weight;  // [out, in, k, k, k]
  Var<T> bias;    // [out]
  int stride = 1;
  int pad = 0;
};

/// Fully convolutional grasp network: TSDF [B, 1, N, N, N] -> per-voxel
/// quality logit, rotation (unit quaternion) and normalized width.
template <class T>
class VgnModel {
 public:
  /// He-uniform weights from `seed`, zero biases.
  explicit VgnModel(const ModelConfig& config = {}, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }
  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::size_t parameter_count() const;
  void zero_grad();

  struct Trunk {
    Var<T> encoded;   // [B, 64, N/8, N/8, N/8]
    Var<T> features;  // [B, 16, N, N, N]
  };
  /// Throws ShapeError unless the input is [B, 1, N, N, N] with N % 8 == 0.
  Trunk trunk(Tape<T>& tape, const Var<T>& input, Backend backend = Backend::parallel) const;

  struct Heads {
    Var<T> quality_logit;  // [M, 1] or [B, 1, N, N, N]
    Var<T> rotation;       // [M, 4] unit rows, or raw [B, 4, N, N, N] when dense
    Var<T> width;          // [M, 1] or [B, 1, N, N, N]
  };
  /// Heads evaluated at selected voxels (training path).
  Heads heads_at(Tape<T>& tape, const Var<T>& features, std::vector<kernels::VoxelRef> voxels) const;
  /// Heads over the whole grid (inference path).
  Heads heads_dense(Tape<T>& tape, const Var<T>& features, Backend backend = Backend::parallel) const;

  template <class U>
  VgnModel<U> cast() const;

 private:
  template <class U>
  friend class VgnModel;

  const Layer<T>& layer(std::size_t i) const { return layers_[i]; }

  ModelConfig config_;
  std::vector<Layer<T>> layers_;  // enc0..2, dec0..2, quality, rotation, width
};

/// Dense network output over an N^3 grid (x fastest).
struct GraspMap {
  int resolution = 0;
  std::vector<float> quality;   // sigmoid of the logit, in (0, 1)
  std::vector<float> rotation;  // 4 x N^3, (w, x, y, z) channel planes, unit per voxel
  std::vector<float> width;     // normalized width clamped to [0, 1]

  Quat rotation_at(std::size_t index) const;
};

/// Inference on one volume. Throws ShapeError if values.size() != n^3 or
/// n is not a multiple of 8.
GraspMap predict(const VgnModel<float>& model, std::span<const float> values, int n,
                 Backend backend = Backend::parallel);

// ---------------------------------------------------------------- loss

struct LossTarget {
  int label = 0;
  Quat rotation = Quat::Identity();
  double width = 0.0;  // normalized
};

struct LossBreakdown {
  double total = 0.0;
  double quality = 0.0;
  double rotation = 0.0;
  double width = 0.0;
  std::size_t count = 0;
  std::size_t correct = 0;  // quality classified on the right side of 0.5
};

/// 1 - |a . b| on (w, x, y, z) 4-vectors.
double quat_loss(const std::array<double, 4>& a, const std::array<double, 4>& b);
/// min(Lquat(pred, target), Lquat(pred, target rotated half a turn about z)).
double symmetric_rotation_loss(const std::array<double, 4>& predicted, const Quat& target);
/// Binary cross-entropy of a probability p against a label.
double binary_cross_entropy(double p, int label);

/// Batch mean of BCE(q) + label * (rotation loss + squared width error).
/// Rotation and width terms vanish for negatives, gradients included.
/// Throws InputError for an empty batch.
template <class T>
Var<T> grasp_loss(Tape<T>& tape, const Var<T>& quality_logit, const Var<T>& rotation,
                  const Var<T>& width, const std::vector<LossTarget>& targets,
                  LossBreakdown* breakdown = nullptr);

// ---------------------------------------------------------------- training

struct TrainConfig {
  double learning_rate = 3e-4;
  int epochs = 10;
  int batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool augment = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Records grouped with their scene's TSDF values.
struct SceneVolume {
  std::uint64_t scene_id = 0;
  std::vector<float> values;
  std::vector<GraspRecord> records;
};

struct TrainingSet {
  int resolution = 40;
  double max_width_voxels = 0.08 / 0.0075;  // width normalization
  std::vector<SceneVolume> scenes;

  std::size_t record_count() const;
};

/// Load records and volumes from a dataset directory.
TrainingSet load_training_set(const DatasetPaths& paths, const GridFrame& frame,
                              const GripperModel& gripper);

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t step = 0;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  LossBreakdown train;
};

/// Raised when the loss becomes non-finite; the message carries the batch
/// index and per-layer weight norms.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs epochs [start_epoch, config.epochs). Each epoch shuffles the scene
/// order, draws one augmentation per scene and fills batches of
/// `batch_size` records from consecutive scenes. All randomness comes from
/// per-epoch substreams, so resuming at an epoch boundary reproduces an
/// uninterrupted run.
std::vector<EpochLog> train(VgnModel<float>& model, AdamState& adam, const TrainingSet& data,
                            const TrainConfig& config, int start_epoch = 0,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

/// Loss and accuracy over every record, no augmentation.
template <class T>
LossBreakdown evaluate(const VgnModel<T>& model, const TrainingSet& data, int batch_size = 32);

/// Builds the batch loss for a list of (scene index, record) pairs; shared by
/// training, evaluation and the gradient checks.
template <class T>
Var<T> batch_loss(Tape<T>& tape, const VgnModel<T>& model, const TrainingSet& data,
                  const std::vector<std::pair<const std::vector<float>*, GraspRecord>>& items,
                  LossBreakdown* breakdown = nullptr, Backend backend = Backend::parallel);

// ---------------------------------------------------------------- checkpoints

struct Checkpoint {
  VgnModel<float> model;
  std::optional<AdamState> adam;
  int epochs_done = 0;
  std::string config_hash;
};

/// Writes the JSON manifest to `path` and the weight blob to `path` + ".bin".
void save_checkpoint(const std::filesystem::path& path, const VgnModel<float>& model,
                     const AdamState* adam, int epochs_done, const std::string& config_hash);
/// Throws FormatError ("bad checkpoint: ...") on a wrong magic, missing blob
/// or inconsistent shapes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace voxgrasp::nn
