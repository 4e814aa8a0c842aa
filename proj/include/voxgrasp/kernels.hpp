#pragma once

// Voxel-parallel compute kernels.
//
// Every kernel exists twice: `serial` is the plain reference loop kept for
// testing, `parallel` is the OpenMP version used in production. Work is split
// into fixed-size pieces that do not depend on the thread count, so the
// parallel kernels are deterministic run to run; TSDF integration, upsampling
// and smoothing are additionally bit-identical to their serial references.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "voxgrasp/geometry.hpp"

namespace voxgrasp::kernels {

/// Dense 3D convolution (cross-correlation) over [batch][channel][z][y][x]
/// tensors with cubic kernels [out][in][kz][ky][kx].
struct ConvShape {
  int batch = 1;
  int in_channels = 1;
  int out_channels = 1;
  std::array<int, 3> in_size{1, 1, 1};  // z, y, x
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_dim(int axis) const { return (in_size[axis] + 2 * pad - kernel) / stride + 1; }
  std::size_t in_volume() const {
    return static_cast<std::size_t>(in_size[0]) * in_size[1] * in_size[2];
  }
  std::size_t out_volume() const {
    return static_cast<std::size_t>(out_dim(0)) * out_dim(1) * out_dim(2);
  }
  std::size_t patch_size() const {
    return static_cast<std::size_t>(in_channels) * kernel * kernel * kernel;
  }
};

/// A voxel in a batched grid: (batch, z, y, x).
struct VoxelRef {
  int batch = 0;
  int z = 0;
  int y = 0;
  int x = 0;
};

struct TsdfIntegrateArgs {
  int resolution = 0;
  double voxel_size = 0.0;
  double truncation = 0.0;
  Pose volume_to_camera;  // volume frame -> camera frame
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  const float* depths = nullptr;
};

namespace serial {

template <class T>
void conv3d_forward(const ConvShape& s, const T* input, const T* weight, const T* bias, T* output);
/// Accumulates into grad_weight and grad_bias; overwrites grad_input when it
/// is non-null.
template <class T>
void conv3d_backward(const ConvShape& s, const T* input, const T* weight, const T* grad_output,
                     T* grad_input, T* grad_weight, T* grad_bias);

/// Trilinear 2x upsampling (align-corners = false, clamped borders) of
/// `planes` independent grids of size d x h x w.
template <class T>
void upsample2x_forward(int planes, std::array<int, 3> size, const T* input, T* output);
/// Adjoint of upsample2x_forward; overwrites grad_input.
template <class T>
void upsample2x_backward(int planes, std::array<int, 3> size, const T* grad_output, T* grad_input);

/// Separable Gaussian over an n^3 grid, radius ceil(3 sigma), replicated border.
void gaussian_smooth(std::span<float> grid, int n, double sigma);

/// Projective TSDF fusion into `sums` (running sum of normalized distances),
/// `weights` and the float `values` (sum / weight).
void tsdf_integrate(const TsdfIntegrateArgs& args, std::span<double> sums,
                    std::span<float> weights, std::span<float> values);

}  // namespace serial

namespace parallel {

template <class T>
void conv3d_forward(const ConvShape& s, const T* input, const T* weight, const T* bias, T* output);
template <class T>
void conv3d_backward(const ConvShape& s, const T* input, const T* weight, const T* grad_output,
                     T* grad_input, T* grad_weight, T* grad_bias);
template <class T>
void upsample2x_forward(int planes, std::array<int, 3> size, const T* input, T* output);
template <class T>
void upsample2x_backward(int planes, std::array<int, 3> size, const T* grad_output, T* grad_input);
void gaussian_smooth(std::span<float> grid, int n, double sigma);
void tsdf_integrate(const TsdfIntegrateArgs& args, std::span<double> sums,
                    std::span<float> weights, std::span<float> values);

}  // namespace parallel

/// Stride-1 convolution evaluated only at `voxels`; output is
/// [voxels.size()][out_channels]. Used by the training path, where the loss
/// touches a handful of voxels per volume.
template <class T>
void conv3d_at_forward(const ConvShape& s, std::span<const VoxelRef> voxels, const T* input,
                       const T* weight, const T* bias, T* output);
/// Accumulates into grad_input, grad_weight and grad_bias.
template <class T>
void conv3d_at_backward(const ConvShape& s, std::span<const VoxelRef> voxels, const T* input,
                        const T* weight, const T* grad_output, T* grad_input, T* grad_weight,
                        T* grad_bias);

/// Normalized 1D Gaussian taps for radius ceil(3 sigma).
std::vector<double> gaussian_taps(double sigma);

}  // namespace voxgrasp::kernels
