#include "voxgrasp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

namespace voxgrasp::kernels {

namespace {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Columns per im2col block. Blocks are whole output z-planes so the split is a
// function of the shape alone.
constexpr std::size_t kTargetColumns = 4096;

struct PlaneBlocks {
  int planes_per_block;
  int block_count;
};

PlaneBlocks plane_blocks(const ConvShape& s) {
  const std::size_t plane = static_cast<std::size_t>(s.out_dim(1)) * s.out_dim(2);
  const int per = std::max<int>(1, static_cast<int>(kTargetColumns / std::max<std::size_t>(plane, 1)));
  const int depth = s.out_dim(0);
  return {per, (depth + per - 1) / per};
}

// Fill `col` (patch_size x columns, row-major) for output planes [z0, z1).
template <class T>
void im2col(const ConvShape& s, const T* in, int z0, int z1, T* col) {
  const int od1 = s.out_dim(1), od2 = s.out_dim(2);
  const std::size_t cols = static_cast<std::size_t>(z1 - z0) * od1 * od2;
  const int k = s.kernel;
  const std::size_t in_vol = s.in_volume();
  std::size_t row = 0;
  for (int ic = 0; ic < s.in_channels; ++ic) {
    const T* src = in + ic * in_vol;
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx, ++row) {
          T* dst = col + row * cols;
          for (int oz = z0; oz < z1; ++oz) {
            const int iz = oz * s.stride - s.pad + kz;
            for (int oy = 0; oy < od1; ++oy) {
              const int iy = oy * s.stride - s.pad + ky;
              if (iz < 0 || iz >= s.in_size[0] || iy < 0 || iy >= s.in_size[1]) {
                std::fill(dst, dst + od2, T(0));
              } else {
                const T* line = src + (static_cast<std::size_t>(iz) * s.in_size[1] + iy) * s.in_size[2];
                for (int ox = 0; ox < od2; ++ox) {
                  const int ix = ox * s.stride - s.pad + kx;
                  dst[ox] = (ix >= 0 && ix < s.in_size[2]) ? line[ix] : T(0);
                }
              }
              dst += od2;
            }
          }
        }
  }
}

// Scatter-add `col` back into `in` (adjoint of im2col).
template <class T>
void col2im(const ConvShape& s, const T* col, std::size_t cols, int z0, int z1, T* in) {
  const int od1 = s.out_dim(1), od2 = s.out_dim(2);
  const int k = s.kernel;
  const std::size_t in_vol = s.in_volume();
  std::size_t row = 0;
  for (int ic = 0; ic < s.in_channels; ++ic) {
    T* dst_base = in + ic * in_vol;
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx, ++row) {
          const T* src = col + row * cols;
          for (int oz = z0; oz < z1; ++oz) {
            const int iz = oz * s.stride - s.pad + kz;
            for (int oy = 0; oy < od1; ++oy) {
              const int iy = oy * s.stride - s.pad + ky;
              if (iz >= 0 && iz < s.in_size[0] && iy >= 0 && iy < s.in_size[1]) {
                T* line = dst_base + (static_cast<std::size_t>(iz) * s.in_size[1] + iy) * s.in_size[2];
                for (int ox = 0; ox < od2; ++ox) {
                  const int ix = ox * s.stride - s.pad + kx;
                  if (ix >= 0 && ix < s.in_size[2]) line[ix] += src[ox];
                }
              }
              src += od2;
            }
          }
        }
  }
}

// Upsampling taps along one axis: output o reads input i0 (weight w0) and
// i1 (weight w1), indices clamped to the grid.
struct Taps {
  int i0, i1;
  double w0, w1;
};

inline Taps upsample_taps(int o, int n) {
  const int i = o / 2;
  if (o % 2 == 0) return {std::max(i - 1, 0), i, 0.25, 0.75};
  return {i, std::min(i + 1, n - 1), 0.75, 0.25};
}

template <class T>
void upsample_plane_forward(std::array<int, 3> n, const T* in, T* out) {
  const int od = 2 * n[0], oh = 2 * n[1], ow = 2 * n[2];
  for (int z = 0; z < od; ++z) {
    const Taps tz = upsample_taps(z, n[0]);
    for (int y = 0; y < oh; ++y) {
      const Taps ty = upsample_taps(y, n[1]);
      const T* r00 = in + (static_cast<std::size_t>(tz.i0) * n[1] + ty.i0) * n[2];
      const T* r01 = in + (static_cast<std::size_t>(tz.i0) * n[1] + ty.i1) * n[2];
      const T* r10 = in + (static_cast<std::size_t>(tz.i1) * n[1] + ty.i0) * n[2];
      const T* r11 = in + (static_cast<std::size_t>(tz.i1) * n[1] + ty.i1) * n[2];
      const T w00 = T(tz.w0 * ty.w0), w01 = T(tz.w0 * ty.w1), w10 = T(tz.w1 * ty.w0),
              w11 = T(tz.w1 * ty.w1);
      T* dst = out + (static_cast<std::size_t>(z) * oh + y) * ow;
      for (int x = 0; x < ow; ++x) {
        const Taps tx = upsample_taps(x, n[2]);
        const T a = w00 * r00[tx.i0] + w01 * r01[tx.i0] + w10 * r10[tx.i0] + w11 * r11[tx.i0];
        const T b = w00 * r00[tx.i1] + w01 * r01[tx.i1] + w10 * r10[tx.i1] + w11 * r11[tx.i1];
        dst[x] = T(tx.w0) * a + T(tx.w1) * b;
      }
    }
  }
}

template <class T>
void upsample_plane_backward(std::array<int, 3> n, const T* grad_out, T* grad_in) {
  const int od = 2 * n[0], oh = 2 * n[1], ow = 2 * n[2];
  std::fill(grad_in, grad_in + static_cast<std::size_t>(n[0]) * n[1] * n[2], T(0));
  for (int z = 0; z < od; ++z) {
    const Taps tz = upsample_taps(z, n[0]);
    for (int y = 0; y < oh; ++y) {
      const Taps ty = upsample_taps(y, n[1]);
      T* r00 = grad_in + (static_cast<std::size_t>(tz.i0) * n[1] + ty.i0) * n[2];
      T* r01 = grad_in + (static_cast<std::size_t>(tz.i0) * n[1] + ty.i1) * n[2];
      T* r10 = grad_in + (static_cast<std::size_t>(tz.i1) * n[1] + ty.i0) * n[2];
      T* r11 = grad_in + (static_cast<std::size_t>(tz.i1) * n[1] + ty.i1) * n[2];
      const T w00 = T(tz.w0 * ty.w0), w01 = T(tz.w0 * ty.w1), w10 = T(tz.w1 * ty.w0),
              w11 = T(tz.w1 * ty.w1);
      const T* g = grad_out + (static_cast<std::size_t>(z) * oh + y) * ow;
      for (int x = 0; x < ow; ++x) {
        const Taps tx = upsample_taps(x, n[2]);
        const T a = T(tx.w0) * g[x];
        const T b = T(tx.w1) * g[x];
        r00[tx.i0] += w00 * a;
        r01[tx.i0] += w01 * a;
        r10[tx.i0] += w10 * a;
        r11[tx.i0] += w11 * a;
        r00[tx.i1] += w00 * b;
        r01[tx.i1] += w01 * b;
        r10[tx.i1] += w10 * b;
        r11[tx.i1] += w11 * b;
      }
    }
  }
}

// One 1D Gaussian pass over `lines` lines of length n; element m of line l
// lives at base(l) + m * stride.
void smooth_line(float* data, std::size_t stride, int n, const std::vector<double>& taps,
                 std::vector<double>& scratch) {
  const int radius = static_cast<int>(taps.size() / 2);
  scratch.resize(n);
  for (int m = 0; m < n; ++m) scratch[m] = data[m * stride];
  for (int m = 0; m < n; ++m) {
    double acc = 0.0;
    for (int t = -radius; t <= radius; ++t) {
      const int idx = std::clamp(m + t, 0, n - 1);
      acc += taps[t + radius] * scratch[idx];
    }
    data[m * stride] = static_cast<float>(acc);
  }
}

void smooth_axis(std::span<float> grid, int n, int axis, const std::vector<double>& taps,
                 bool use_threads) {
  const std::size_t nn = static_cast<std::size_t>(n);
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? nn : nn * nn);
  const long long lines = static_cast<long long>(nn * nn);
#pragma omp parallel if (use_threads)
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (long long l = 0; l < lines; ++l) {
      const std::size_t a = static_cast<std::size_t>(l) % nn;
      const std::size_t b = static_cast<std::size_t>(l) / nn;
      std::size_t base;
      if (axis == 0) base = (b * nn + a) * nn;  // (z=b, y=a)
      else if (axis == 1) base = b * nn * nn + a;  // (z=b, x=a)
      else base = b * nn + a;  // (y=b, x=a)
      smooth_line(grid.data() + base, stride, n, taps, scratch);
    }
  }
}

void integrate_slice(const TsdfIntegrateArgs& a, int k, std::span<double> sums,
                     std::span<float> weights, std::span<float> values) {
  const int n = a.resolution;
  const Mat3 r = a.volume_to_camera.matrix();
  const Vec3 t = a.volume_to_camera.translation;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Vec3 p((i + 0.5) * a.voxel_size, (j + 0.5) * a.voxel_size, (k + 0.5) * a.voxel_size);
      const Vec3 c = r * p + t;
      if (c.z() <= 0.0) continue;
      const double u = a.fx * c.x() / c.z() + a.cx;
      const double v = a.fy * c.y() / c.z() + a.cy;
      const long ui = std::lround(u);
      const long vi = std::lround(v);
      if (ui < 0 || vi < 0 || ui >= a.width || vi >= a.height) continue;
      const float depth = a.depths[static_cast<std::size_t>(vi) * a.width + ui];
      if (!(depth > 0.0f)) continue;
      const double sdf = static_cast<double>(depth) - c.z();
      if (sdf < -a.truncation) continue;
      // Observations are rounded to float so the running sums stay exact and
      // the fused value does not depend on the image order.
      const float obs = static_cast<float>(std::min(1.0, sdf / a.truncation));
      const std::size_t idx = (static_cast<std::size_t>(k) * n + j) * n + i;
      sums[idx] += obs;
      weights[idx] += 1.0f;
      values[idx] = static_cast<float>(sums[idx] / weights[idx]);
    }
}

}  // namespace

std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    taps[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    total += taps[t + radius];
  }
  for (double& w : taps) w /= total;
  return taps;
}

namespace serial {

template <class T>
void conv3d_forward(const ConvShape& s, const T* input, const T* weight, const T* bias, T* output) {
  const int od0 = s.out_dim(0), od1 = s.out_dim(1), od2 = s.out_dim(2);
  const int k = s.kernel;
  const std::size_t in_vol = s.in_volume(), out_vol = s.out_volume();
  for (int b = 0; b < s.batch; ++b)
    for (int oc = 0; oc < s.out_channels; ++oc) {
      T* out = output + (static_cast<std::size_t>(b) * s.out_channels + oc) * out_vol;
      for (int oz = 0; oz < od0; ++oz)
        for (int oy = 0; oy < od1; ++oy)
          for (int ox = 0; ox < od2; ++ox) {
            T acc = bias ? bias[oc] : T(0);
            for (int ic = 0; ic < s.in_channels; ++ic) {
              const T* in = input + (static_cast<std::size_t>(b) * s.in_channels + ic) * in_vol;
              const T* w = weight + (static_cast<std::size_t>(oc) * s.in_channels + ic) * k * k * k;
              for (int kz = 0; kz < k; ++kz) {
                const int iz = oz * s.stride - s.pad + kz;
                if (iz < 0 || iz >= s.in_size[0]) continue;
                for (int ky = 0; ky < k; ++ky) {
                  const int iy = oy * s.stride - s.pad + ky;
                  if (iy < 0 || iy >= s.in_size[1]) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * s.stride - s.pad + kx;
                    if (ix < 0 || ix >= s.in_size[2]) continue;
                    acc += w[(kz * k + ky) * k + kx] *
                           in[(static_cast<std::size_t>(iz) * s.in_size[1] + iy) * s.in_size[2] + ix];
                  }
                }
              }
            }
            out[(static_cast<std::size_t>(oz) * od1 + oy) * od2 + ox] = acc;
          }
    }
}

template <class T>
void conv3d_backward(const ConvShape& s, const T* input, const T* weight, const T* grad_output,
                     T* grad_input, T* grad_weight, T* grad_bias) {
  const int od0 = s.out_dim(0), od1 = s.out_dim(1), od2 = s.out_dim(2);
  const int k = s.kernel;
  const std::size_t in_vol = s.in_volume(), out_vol = s.out_volume();
  if (grad_input)
    std::fill(grad_input, grad_input + in_vol * s.in_channels * s.batch, T(0));
  for (int b = 0; b < s.batch; ++b)
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const T* g = grad_output + (static_cast<std::size_t>(b) * s.out_channels + oc) * out_vol;
      for (int oz = 0; oz < od0; ++oz)
        for (int oy = 0; oy < od1; ++oy)
          for (int ox = 0; ox < od2; ++ox) {
            const T go = g[(static_cast<std::size_t>(oz) * od1 + oy) * od2 + ox];
            if (grad_bias) grad_bias[oc] += go;
            for (int ic = 0; ic < s.in_channels; ++ic) {
              const std::size_t in_off = (static_cast<std::size_t>(b) * s.in_channels + ic) * in_vol;
              const std::size_t w_off = (static_cast<std::size_t>(oc) * s.in_channels + ic) * k * k * k;
              for (int kz = 0; kz < k; ++kz) {
                const int iz = oz * s.stride - s.pad + kz;
                if (iz < 0 || iz >= s.in_size[0]) continue;
                for (int ky = 0; ky < k; ++ky) {
                  const int iy = oy * s.stride - s.pad + ky;
                  if (iy < 0 || iy >= s.in_size[1]) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * s.stride - s.pad + kx;
                    if (ix < 0 || ix >= s.in_size[2]) continue;
                    const std::size_t ii =
                        in_off + (static_cast<std::size_t>(iz) * s.in_size[1] + iy) * s.in_size[2] + ix;
                    const std::size_t wi = w_off + (kz * k + ky) * k + kx;
                    grad_weight[wi] += go * input[ii];
                    if (grad_input) grad_input[ii] += go * weight[wi];
                  }
                }
              }
            }
          }
    }
}

template <class T>
void upsample2x_forward(int planes, std::array<int, 3> size, const T* input, T* output) {
  const std::size_t in_vol = static_cast<std::size_t>(size[0]) * size[1] * size[2];
  for (int p = 0; p < planes; ++p)
    upsample_plane_forward(size, input + p * in_vol, output + p * in_vol * 8);
}

template <class T>
void upsample2x_backward(int planes, std::array<int, 3> size, const T* grad_output, T* grad_input) {
  const std::size_t in_vol = static_cast<std::size_t>(size[0]) * size[1] * size[2];
  for (int p = 0; p < planes; ++p)
    upsample_plane_backward(size, grad_output + p * in_vol * 8, grad_input + p * in_vol);
}

void gaussian_smooth(std::span<float> grid, int n, double sigma) {
  const auto taps = gaussian_taps(sigma);
  for (int axis = 0; axis < 3; ++axis) smooth_axis(grid, n, axis, taps, false);
}

void tsdf_integrate(const TsdfIntegrateArgs& args, std::span<double> sums,
                    std::span<float> weights, std::span<float> values) {
  for (int k = 0; k < args.resolution; ++k) integrate_slice(args, k, sums, weights, values);
}

template void conv3d_forward<float>(const ConvShape&, const float*, const float*, const float*, float*);
template void conv3d_forward<double>(const ConvShape&, const double*, const double*, const double*, double*);
template void conv3d_backward<float>(const ConvShape&, const float*, const float*, const float*, float*,
                                     float*, float*);
template void conv3d_backward<double>(const ConvShape&, const double*, const double*, const double*,
                                      double*, double*, double*);
template void upsample2x_forward<float>(int, std::array<int, 3>, const float*, float*);
template void upsample2x_forward<double>(int, std::array<int, 3>, const double*, double*);
template void upsample2x_backward<float>(int, std::array<int, 3>, const float*, float*);
template void upsample2x_backward<double>(int, std::array<int, 3>, const double*, double*);

}  // namespace serial

namespace parallel {

template <class T>
void conv3d_forward(const ConvShape& s, const T* input, const T* weight, const T* bias, T* output) {
  const auto blocks = plane_blocks(s);
  const std::size_t plane = static_cast<std::size_t>(s.out_dim(1)) * s.out_dim(2);
  const std::size_t out_vol = s.out_volume(), in_vol = s.in_volume();
  const std::size_t patch = s.patch_size();
  const Eigen::Map<const MatRM<T>> w(weight, s.out_channels, static_cast<Eigen::Index>(patch));
  const long long tasks = static_cast<long long>(s.batch) * blocks.block_count;
#pragma omp parallel
  {
    std::vector<T> col;
#pragma omp for schedule(dynamic)
    for (long long task = 0; task < tasks; ++task) {
      const int b = static_cast<int>(task / blocks.block_count);
      const int blk = static_cast<int>(task % blocks.block_count);
      const int z0 = blk * blocks.planes_per_block;
      const int z1 = std::min(s.out_dim(0), z0 + blocks.planes_per_block);
      const std::size_t cols = static_cast<std::size_t>(z1 - z0) * plane;
      col.resize(patch * cols);
      im2col(s, input + static_cast<std::size_t>(b) * s.in_channels * in_vol, z0, z1, col.data());
      const Eigen::Map<const MatRM<T>> c(col.data(), static_cast<Eigen::Index>(patch),
                                         static_cast<Eigen::Index>(cols));
      Eigen::Map<MatRM<T>, 0, Eigen::OuterStride<>> out(
          output + static_cast<std::size_t>(b) * s.out_channels * out_vol + z0 * plane, s.out_channels,
          static_cast<Eigen::Index>(cols), Eigen::OuterStride<>(static_cast<Eigen::Index>(out_vol)));
      out.noalias() = w * c;
      if (bias)
        for (int oc = 0; oc < s.out_channels; ++oc) out.row(oc).array() += bias[oc];
    }
  }
}

template <class T>
void conv3d_backward(const ConvShape& s, const T* input, const T* weight, const T* grad_output,
                     T* grad_input, T* grad_weight, T* grad_bias) {
  const auto blocks = plane_blocks(s);
  const std::size_t plane = static_cast<std::size_t>(s.out_dim(1)) * s.out_dim(2);
  const std::size_t out_vol = s.out_volume(), in_vol = s.in_volume();
  const std::size_t patch = s.patch_size();
  const Eigen::Map<const MatRM<T>> w(weight, s.out_channels, static_cast<Eigen::Index>(patch));
  const long long tasks = static_cast<long long>(s.batch) * blocks.block_count;

  // Per-block weight gradients, reduced in block order below.
  std::vector<MatRM<T>> partial(static_cast<std::size_t>(tasks));
  // Per-block input-patch gradients, scattered in block order below.
  std::vector<std::vector<T>> dcols(grad_input ? static_cast<std::size_t>(tasks) : 0);

#pragma omp parallel
  {
    std::vector<T> col;
#pragma omp for schedule(dynamic)
    for (long long task = 0; task < tasks; ++task) {
      const int b = static_cast<int>(task / blocks.block_count);
      const int blk = static_cast<int>(task % blocks.block_count);
      const int z0 = blk * blocks.planes_per_block;
      const int z1 = std::min(s.out_dim(0), z0 + blocks.planes_per_block);
      const std::size_t cols = static_cast<std::size_t>(z1 - z0) * plane;
      col.resize(patch * cols);
      im2col(s, input + static_cast<std::size_t>(b) * s.in_channels * in_vol, z0, z1, col.data());
      const Eigen::Map<const MatRM<T>> c(col.data(), static_cast<Eigen::Index>(patch),
                                         static_cast<Eigen::Index>(cols));
      const Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>> g(
          grad_output + static_cast<std::size_t>(b) * s.out_channels * out_vol + z0 * plane,
          s.out_channels, static_cast<Eigen::Index>(cols),
          Eigen::OuterStride<>(static_cast<Eigen::Index>(out_vol)));
      partial[task].noalias() = g * c.transpose();
      if (grad_input) {
        auto& dcol = dcols[task];
        dcol.resize(patch * cols);
        Eigen::Map<MatRM<T>> d(dcol.data(), static_cast<Eigen::Index>(patch),
                               static_cast<Eigen::Index>(cols));
        d.noalias() = w.transpose() * g;
      }
    }
  }

  Eigen::Map<MatRM<T>> gw(grad_weight, s.out_channels, static_cast<Eigen::Index>(patch));
  for (const auto& p : partial) gw += p;
  if (grad_bias)
    for (int b = 0; b < s.batch; ++b)
      for (int oc = 0; oc < s.out_channels; ++oc) {
        const T* g = grad_output + (static_cast<std::size_t>(b) * s.out_channels + oc) * out_vol;
        T acc = T(0);
        for (std::size_t i = 0; i < out_vol; ++i) acc += g[i];
        grad_bias[oc] += acc;
      }
  if (grad_input) {
    std::fill(grad_input, grad_input + in_vol * s.in_channels * s.batch, T(0));
#pragma omp parallel for schedule(static)
    for (int b = 0; b < s.batch; ++b)
      for (int blk = 0; blk < blocks.block_count; ++blk) {
        const int z0 = blk * blocks.planes_per_block;
        const int z1 = std::min(s.out_dim(0), z0 + blocks.planes_per_block);
        const std::size_t cols = static_cast<std::size_t>(z1 - z0) * plane;
        col2im(s, dcols[static_cast<std::size_t>(b) * blocks.block_count + blk].data(), cols, z0, z1,
               grad_input + static_cast<std::size_t>(b) * s.in_channels * in_vol);
      }
  }
}

template <class T>
void upsample2x_forward(int planes, std::array<int, 3> size, const T* input, T* output) {
  const std::size_t in_vol = static_cast<std::size_t>(size[0]) * size[1] * size[2];
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    upsample_plane_forward(size, input + p * in_vol, output + p * in_vol * 8);
}

template <class T>
void upsample2x_backward(int planes, std::array<int, 3> size, const T* grad_output, T* grad_input) {
  const std::size_t in_vol = static_cast<std::size_t>(size[0]) * size[1] * size[2];
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    upsample_plane_backward(size, grad_output + p * in_vol * 8, grad_input + p * in_vol);
}

void gaussian_smooth(std::span<float> grid, int n, double sigma) {
  const auto taps = gaussian_taps(sigma);
  for (int axis = 0; axis < 3; ++axis) smooth_axis(grid, n, axis, taps, true);
}

void tsdf_integrate(const TsdfIntegrateArgs& args, std::span<double> sums,
                    std::span<float> weights, std::span<float> values) {
#pragma omp parallel for schedule(static)
  for (int k = 0; k < args.resolution; ++k) integrate_slice(args, k, sums, weights, values);
}

template void conv3d_forward<float>(const ConvShape&, const float*, const float*, const float*, float*);
template void conv3d_forward<double>(const ConvShape&, const double*, const double*, const double*, double*);
template void conv3d_backward<float>(const ConvShape&, const float*, const float*, const float*, float*,
                                     float*, float*);
template void conv3d_backward<double>(const ConvShape&, const double*, const double*, const double*,
                                      double*, double*, double*);
template void upsample2x_forward<float>(int, std::array<int, 3>, const float*, float*);
template void upsample2x_forward<double>(int, std::array<int, 3>, const double*, double*);
template void upsample2x_backward<float>(int, std::array<int, 3>, const float*, float*);
template void upsample2x_backward<double>(int, std::array<int, 3>, const double*, double*);

}  // namespace parallel

template <class T>
void conv3d_at_forward(const ConvShape& s, std::span<const VoxelRef> voxels, const T* input,
                       const T* weight, const T* bias, T* output) {
  const int k = s.kernel;
  const std::size_t in_vol = s.in_volume();
  const std::size_t patch = s.patch_size();
  std::vector<T> buf(patch);
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    const VoxelRef& v = voxels[n];
    std::size_t r = 0;
    for (int ic = 0; ic < s.in_channels; ++ic) {
      const T* in = input + (static_cast<std::size_t>(v.batch) * s.in_channels + ic) * in_vol;
      for (int kz = 0; kz < k; ++kz)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx, ++r) {
            const int iz = v.z - s.pad + kz, iy = v.y - s.pad + ky, ix = v.x - s.pad + kx;
            const bool inside = iz >= 0 && iz < s.in_size[0] && iy >= 0 && iy < s.in_size[1] &&
                                ix >= 0 && ix < s.in_size[2];
            buf[r] = inside ? in[(static_cast<std::size_t>(iz) * s.in_size[1] + iy) * s.in_size[2] + ix]
                            : T(0);
          }
    }
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const T* w = weight + static_cast<std::size_t>(oc) * patch;
      T acc = bias ? bias[oc] : T(0);
      for (std::size_t i = 0; i < patch; ++i) acc += w[i] * buf[i];
      output[n * s.out_channels + oc] = acc;
    }
  }
}

template <class T>
void conv3d_at_backward(const ConvShape& s, std::span<const VoxelRef> voxels, const T* input,
                        const T* weight, const T* grad_output, T* grad_input, T* grad_weight,
                        T* grad_bias) {
  const int k = s.kernel;
  const std::size_t in_vol = s.in_volume();
  const std::size_t patch = s.patch_size();
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    const VoxelRef& v = voxels[n];
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const T g = grad_output[n * s.out_channels + oc];
      if (grad_bias) grad_bias[oc] += g;
      if (g == T(0)) continue;
      const T* w = weight + static_cast<std::size_t>(oc) * patch;
      T* gw = grad_weight + static_cast<std::size_t>(oc) * patch;
      std::size_t r = 0;
      for (int ic = 0; ic < s.in_channels; ++ic) {
        const std::size_t off = (static_cast<std::size_t>(v.batch) * s.in_channels + ic) * in_vol;
        for (int kz = 0; kz < k; ++kz)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx, ++r) {
              const int iz = v.z - s.pad + kz, iy = v.y - s.pad + ky, ix = v.x - s.pad + kx;
              if (iz < 0 || iz >= s.in_size[0] || iy < 0 || iy >= s.in_size[1] || ix < 0 ||
                  ix >= s.in_size[2])
                continue;
              const std::size_t ii = off + (static_cast<std::size_t>(iz) * s.in_size[1] + iy) * s.in_size[2] + ix;
              gw[r] += g * input[ii];
              if (grad_input) grad_input[ii] += g * w[r];
            }
      }
    }
  }
}

template void conv3d_at_forward<float>(const ConvShape&, std::span<const VoxelRef>, const float*,
                                       const float*, const float*, float*);
template void conv3d_at_forward<double>(const ConvShape&, std::span<const VoxelRef>, const double*,
                                        const double*, const double*, double*);
template void conv3d_at_backward<float>(const ConvShape&, std::span<const VoxelRef>, const float*,
                                        const float*, const float*, float*, float*, float*);
template void conv3d_at_backward<double>(const ConvShape&, std::span<const VoxelRef>, const double*,
                                         const double*, const double*, double*, double*, double*);

}  // namespace voxgrasp::kernels
