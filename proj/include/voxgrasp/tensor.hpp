#pragma once

// Dense tensors and a small reverse-mode autodiff tape.
//
// A Var is a node holding a value and (once backward reaches it) a gradient.
// Operations append nodes to the active Tape together with a closure that
// pushes the node's gradient to its inputs. Parameters are long-lived leaf
// nodes owned by the model; their gradients accumulate until cleared.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "voxgrasp/kernels.hpp"

namespace voxgrasp::nn {

template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0));

  std::size_t size() const { return data.size(); }
  int dim(int axis) const { return shape.at(static_cast<std::size_t>(axis)); }
  std::string shape_string() const;
};

std::size_t shape_volume(const std::vector<int>& shape);

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until touched by backward
  std::function<void()> backward;
  std::vector<std::shared_ptr<Node>> inputs;  // keeps the graph alive
  bool requires_grad = true;

  /// Gradient buffer, zero-initialized on first use.
  Tensor<T>& grad_buffer();
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad = true);

/// Records nodes in creation order; backward runs them in reverse.
template <class T>
class Tape {
 public:
  void record(const Var<T>& node) { nodes_.push_back(node); }
  /// Seeds d(loss)/d(loss) = 1 and propagates to every recorded node.
  void backward(const Var<T>& loss);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Var<T>> nodes_;
};

enum class Backend { parallel, serial };

/// [B, C, D, H, W] x [O, C, k, k, k] (+ [O]) -> [B, O, D', H', W'].
/// Throws ShapeError on mismatched channels or ranks.
template <class T>
Var<T> conv3d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
              int pad, Backend backend = Backend::parallel);

/// Stride-1 convolution evaluated at `voxels` only: -> [M, O].
template <class T>
Var<T> conv3d_at(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int pad,
                 std::vector<kernels::VoxelRef> voxels);

template <class T>
Var<T> relu(Tape<T>& tape, const Var<T>& x);

/// Trilinear 2x upsampling of the last three axes (align-corners = false).
template <class T>
Var<T> upsample2x(Tape<T>& tape, const Var<T>& x, Backend backend = Backend::parallel);

/// Rows of an [M, K] tensor scaled to unit norm. All-zero rows become
/// (1, 0, ..., 0) and pass no gradient.
template <class T>
Var<T> normalize_rows(Tape<T>& tape, const Var<T>& x);

}  // namespace voxgrasp::nn
