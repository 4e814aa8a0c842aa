#include "voxgrasp/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "voxgrasp/error.hpp"

namespace voxgrasp::nn {

std::size_t shape_volume(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

template <class T>
Tensor<T>::Tensor(std::vector<int> s, T fill) : shape(std::move(s)), data(shape_volume(shape), fill) {}

template <class T>
std::string Tensor<T>::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s + "]";
}

template <class T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.data.size() != value.data.size()) grad = Tensor<T>(value.shape);
  return grad;
}

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <class T>
void Tape<T>::backward(const Var<T>& loss) {
  auto& g = loss->grad_buffer();
  std::fill(g.data.begin(), g.data.end(), T(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& n = **it;
    if (n.backward && n.grad.size() == n.value.size()) n.backward();
  }
}

namespace {

template <class T>
Var<T> make_node(Tape<T>& tape, Tensor<T> value, std::vector<Var<T>> inputs) {
  auto n = make_leaf(std::move(value));
  n->inputs = std::move(inputs);
  tape.record(n);
  return n;
}

kernels::ConvShape conv_shape(const std::vector<int>& x, const std::vector<int>& w, int stride, int pad) {
  if (x.size() != 5 || w.size() != 5)
    throw ShapeError("conv3d expects 5-d input and kernel, got ranks " + std::to_string(x.size()) +
                     " and " + std::to_string(w.size()));
  if (x[1] != w[1])
    throw ShapeError("conv3d channel mismatch: input has " + std::to_string(x[1]) +
                     " channels, kernel expects " + std::to_string(w[1]));
  if (w[2] != w[3] || w[2] != w[4]) throw ShapeError("conv3d kernel must be cubic");
  if (stride < 1) throw ShapeError("conv3d stride must be >= 1");
  kernels::ConvShape s;
  s.batch = x[0];
  s.in_channels = x[1];
  s.out_channels = w[0];
  s.in_size = {x[2], x[3], x[4]};
  s.kernel = w[2];
  s.stride = stride;
  s.pad = pad;
  for (int a = 0; a < 3; ++a)
    if (s.out_dim(a) < 1) throw ShapeError("conv3d output would be empty");
  return s;
}

}  // namespace

template <class T>
Var<T> conv3d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
              int pad, Backend backend) {
  const kernels::ConvShape s = conv_shape(x->value.shape, weight->value.shape, stride, pad);
  if (bias && bias->value.size() != static_cast<std::size_t>(s.out_channels))
    throw ShapeError("conv3d bias has " + std::to_string(bias->value.size()) + " entries, expected " +
                     std::to_string(s.out_channels));
  Tensor<T> out({s.batch, s.out_channels, s.out_dim(0), s.out_dim(1), s.out_dim(2)});
  const T* b = bias ? bias->value.data.data() : nullptr;
  if (backend == Backend::parallel)
    kernels::parallel::conv3d_forward(s, x->value.data.data(), weight->value.data.data(), b, out.data.data());
  else
    kernels::serial::conv3d_forward(s, x->value.data.data(), weight->value.data.data(), b, out.data.data());
  auto node = make_node(tape, std::move(out), {x, weight, bias});
  Node<T>* self = node.get();
  node->backward = [self, s, backend]() {
    Node<T>& xn = *self->inputs[0];
    Node<T>& wn = *self->inputs[1];
    Node<T>* bn = self->inputs[2].get();
    // Input gradients are overwritten by the kernel, so go through a scratch
    // buffer and accumulate.
    std::vector<T> gx(xn.requires_grad ? xn.value.size() : 0);
    T* gx_ptr = xn.requires_grad ? gx.data() : nullptr;
    T* gb = bn ? bn->grad_buffer().data.data() : nullptr;
    if (backend == Backend::parallel)
      kernels::parallel::conv3d_backward(s, xn.value.data.data(), wn.value.data.data(),
                                         self->grad.data.data(), gx_ptr,
                                         wn.grad_buffer().data.data(), gb);
    else
      kernels::serial::conv3d_backward(s, xn.value.data.data(), wn.value.data.data(),
                                       self->grad.data.data(), gx_ptr, wn.grad_buffer().data.data(),
                                       gb);
    if (!xn.requires_grad) return;
    auto& dst = xn.grad_buffer().data;
    for (std::size_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
  };
  return node;
}

template <class T>
Var<T> conv3d_at(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int pad,
                 std::vector<kernels::VoxelRef> voxels) {
  const kernels::ConvShape s = conv_shape(x->value.shape, weight->value.shape, 1, pad);
  for (const auto& v : voxels)
    if (v.batch < 0 || v.batch >= s.batch || v.z < 0 || v.z >= s.out_dim(0) || v.y < 0 ||
        v.y >= s.out_dim(1) || v.x < 0 || v.x >= s.out_dim(2))
      throw ShapeError("conv3d_at voxel outside the output grid");
  Tensor<T> out({static_cast<int>(voxels.size()), s.out_channels});
  kernels::conv3d_at_forward<T>(s, voxels, x->value.data.data(), weight->value.data.data(),
                                bias ? bias->value.data.data() : nullptr, out.data.data());
  auto node = make_node(tape, std::move(out), {x, weight, bias});
  Node<T>* self = node.get();
  node->backward = [self, s, voxels = std::move(voxels)]() {
    Node<T>& xn = *self->inputs[0];
    Node<T>& wn = *self->inputs[1];
    Node<T>* bn = self->inputs[2].get();
    kernels::conv3d_at_backward<T>(s, voxels, xn.value.data.data(), wn.value.data.data(),
                                   self->grad.data.data(),
                                   xn.requires_grad ? xn.grad_buffer().data.data() : nullptr,
                                   wn.grad_buffer().data.data(),
                                   bn ? bn->grad_buffer().data.data() : nullptr);
  };
  return node;
}

template <class T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> out(x->value.shape);
  const auto& in = x->value.data;
  for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = in[i] > T(0) ? in[i] : T(0);
  auto node = make_node(tape, std::move(out), {x});
  Node<T>* self = node.get();
  node->backward = [self]() {
    Node<T>& xn = *self->inputs[0];
    auto& gx = xn.grad_buffer().data;
    const auto& y = self->value.data;
    const auto& g = self->grad.data;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (y[i] > T(0)) gx[i] += g[i];
  };
  return node;
}

template <class T>
Var<T> upsample2x(Tape<T>& tape, const Var<T>& x, Backend backend) {
  const auto& sh = x->value.shape;
  if (sh.size() < 3) throw ShapeError("upsample2x needs at least 3 axes");
  const std::size_t r = sh.size();
  const std::array<int, 3> size{sh[r - 3], sh[r - 2], sh[r - 1]};
  int planes = 1;
  for (std::size_t i = 0; i + 3 < r; ++i) planes *= sh[i];
  std::vector<int> out_shape = sh;
  for (std::size_t i = r - 3; i < r; ++i) out_shape[i] *= 2;
  Tensor<T> out(out_shape);
  if (backend == Backend::parallel)
    kernels::parallel::upsample2x_forward(planes, size, x->value.data.data(), out.data.data());
  else
    kernels::serial::upsample2x_forward(planes, size, x->value.data.data(), out.data.data());
  auto node = make_node(tape, std::move(out), {x});
  Node<T>* self = node.get();
  node->backward = [self, planes, size, backend]() {
    Node<T>& xn = *self->inputs[0];
    std::vector<T> gx(xn.value.size());
    if (backend == Backend::parallel)
      kernels::parallel::upsample2x_backward(planes, size, self->grad.data.data(), gx.data());
    else
      kernels::serial::upsample2x_backward(planes, size, self->grad.data.data(), gx.data());
    auto& dst = xn.grad_buffer().data;
    for (std::size_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
  };
  return node;
}

template <class T>
Var<T> normalize_rows(Tape<T>& tape, const Var<T>& x) {
  const auto& sh = x->value.shape;
  if (sh.size() != 2) throw ShapeError("normalize_rows expects [M, K]");
  const int m = sh[0], k = sh[1];
  Tensor<T> out(sh);
  std::vector<T> norms(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const T* row = x->value.data.data() + static_cast<std::size_t>(i) * k;
    T ss = T(0);
    for (int j = 0; j < k; ++j) ss += row[j] * row[j];
    const T n = std::sqrt(ss);
    norms[i] = n;
    T* dst = out.data.data() + static_cast<std::size_t>(i) * k;
    if (n > T(0))
      for (int j = 0; j < k; ++j) dst[j] = row[j] / n;
    else
      dst[0] = T(1);
  }
  auto node = make_node(tape, std::move(out), {x});
  Node<T>* self = node.get();
  node->backward = [self, m, k, norms = std::move(norms)]() {
    Node<T>& xn = *self->inputs[0];
    auto& gx = xn.grad_buffer().data;
    for (int i = 0; i < m; ++i) {
      if (!(norms[i] > T(0))) continue;
      const T* y = self->value.data.data() + static_cast<std::size_t>(i) * k;
      const T* g = self->grad.data.data() + static_cast<std::size_t>(i) * k;
      T dot = T(0);
      for (int j = 0; j < k; ++j) dot += y[j] * g[j];
      for (int j = 0; j < k; ++j) gx[static_cast<std::size_t>(i) * k + j] += (g[j] - dot * y[j]) / norms[i];
    }
  };
  return node;
}

#define VOXGRASP_INSTANTIATE(T)                                                                   \
  template struct Tensor<T>;                                                                      \
  template struct Node<T>;                                                                        \
  template class Tape<T>;                                                                         \
  template Var<T> make_leaf<T>(Tensor<T>, bool);                                                        \
  template Var<T> conv3d<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, int, int,      \
                            Backend);                                                             \
  template Var<T> conv3d_at<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, int,        \
                               std::vector<kernels::VoxelRef>);                                   \
  template Var<T> relu<T>(Tape<T>&, const Var<T>&);                                               \
  template Var<T> upsample2x<T>(Tape<T>&, const Var<T>&, Backend);                                \
  template Var<T> normalize_rows<T>(Tape<T>&, const Var<T>&);

VOXGRASP_INSTANTIATE(float)
VOXGRASP_INSTANTIATE(double)

}  // namespace voxgrasp::nn
