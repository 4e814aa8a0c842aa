#include <doctest.h>

#include <omp.h>

#include <cmath>

#include "support.hpp"
#include "voxgrasp/kernels.hpp"

using namespace voxgrasp;
using namespace voxgrasp::kernels;

namespace {

// Direct six-loop cross-correlation, the reference for everything below.
template <class T>
std::vector<T> dense_conv(const ConvShape& s, const std::vector<T>& x, const std::vector<T>& w,
                          const std::vector<T>& b) {
  const int od = s.out_dim(0), oh = s.out_dim(1), ow = s.out_dim(2), k = s.kernel;
  const auto& in = s.in_size;
  std::vector<T> out(static_cast<std::size_t>(s.batch) * s.out_channels * od * oh * ow);
  std::size_t o = 0;
  for (int n = 0; n < s.batch; ++n)
    for (int co = 0; co < s.out_channels; ++co)
      for (int z = 0; z < od; ++z)
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx, ++o) {
            double acc = b.empty() ? 0.0 : b[co];
            for (int ci = 0; ci < s.in_channels; ++ci)
              for (int a = 0; a < k; ++a)
                for (int c = 0; c < k; ++c)
                  for (int e = 0; e < k; ++e) {
                    const int iz = z * s.stride - s.pad + a, iy = y * s.stride - s.pad + c,
                              ix = xx * s.stride - s.pad + e;
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= in[0] || iy >= in[1] || ix >= in[2]) continue;
                    acc += double(x[(((std::size_t)n * s.in_channels + ci) * in[0] + iz) * in[1] * in[2] +
                                    (std::size_t)iy * in[2] + ix]) *
                           w[((((std::size_t)co * s.in_channels + ci) * k + a) * k + c) * k + e];
                  }
            out[o] = static_cast<T>(acc);
          }
  return out;
}

ConvShape shape(int batch, int cin, int cout, std::array<int, 3> size, int k, int stride, int pad) {
  ConvShape s;
  s.batch = batch;
  s.in_channels = cin;
  s.out_channels = cout;
  s.in_size = size;
  s.kernel = k;
  s.stride = stride;
  s.pad = pad;
  return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("1x1x1 identity kernel reproduces the input") {
  Rng rng(1);
  const auto s = shape(1, 1, 1, {4, 5, 6}, 1, 1, 0);
  const auto x = testing::random_floats(rng, s.in_volume());
  const std::vector<float> w{1.0f};
  std::vector<float> out(s.out_volume());
  parallel::conv3d_forward<float>(s, x.data(), w.data(), nullptr, out.data());
  CHECK(out == x);
}

TEST_CASE("all-ones 3^3 kernel on ones counts 27 in the interior") {
  const auto s = shape(1, 1, 1, {5, 5, 5}, 3, 1, 1);
  const std::vector<float> x(s.in_volume(), 1.0f), w(27, 1.0f);
  std::vector<float> out(s.out_volume());
  parallel::conv3d_forward<float>(s, x.data(), w.data(), nullptr, out.data());
  CHECK(out[(2 * 5 + 2) * 5 + 2] == 27.0f);
  CHECK(out[0] == 8.0f);  // corner sees a 2^3 block
}

TEST_CASE("output size follows floor((in + 2 pad - k) / stride) + 1") {
  CHECK(shape(1, 1, 1, {40, 40, 40}, 5, 2, 2).out_dim(0) == 20);
  CHECK(shape(1, 1, 1, {20, 20, 20}, 3, 2, 1).out_dim(0) == 10);
  CHECK(shape(1, 1, 1, {10, 10, 10}, 3, 2, 1).out_dim(0) == 5);
  CHECK(shape(1, 1, 1, {7, 7, 7}, 3, 2, 0).out_dim(0) == 3);
}

TEST_CASE("conv forward matches the dense reference on random shapes") {
  Rng rng(2);
  for (int trial = 0; trial < 12; ++trial) {
    const int k = 1 + 2 * uniform_int(rng, 0, 2);
    const auto s = shape(uniform_int(rng, 1, 2), uniform_int(rng, 1, 3), uniform_int(rng, 1, 4),
                         {uniform_int(rng, k, 9), uniform_int(rng, k, 9), uniform_int(rng, k, 9)}, k,
                         uniform_int(rng, 1, 2), uniform_int(rng, 0, k / 2));
    const auto x = testing::random_doubles(rng, s.batch * s.in_channels * s.in_volume());
    const auto w = testing::random_doubles(rng, s.out_channels * s.patch_size());
    const auto b = testing::random_doubles(rng, s.out_channels);
    std::vector<double> out(s.batch * s.out_channels * s.out_volume());
    parallel::conv3d_forward<double>(s, x.data(), w.data(), b.data(), out.data());
    const auto ref = dense_conv(s, x, w, b);
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv gradients match central finite differences on 2x3x4^3") {
  Rng rng(3);
  const auto s = shape(2, 3, 2, {4, 4, 4}, 3, 1, 1);
  auto x = testing::random_doubles(rng, 2 * 3 * 64);
  auto w = testing::random_doubles(rng, 2 * s.patch_size());
  auto b = testing::random_doubles(rng, 2);
  const auto g = testing::random_doubles(rng, 2 * 2 * s.out_volume());  // upstream gradient
  auto loss = [&]() {
    std::vector<double> out(g.size());
    serial::conv3d_forward<double>(s, x.data(), w.data(), b.data(), out.data());
    return dot(out, g);
  };
  std::vector<double> gx(x.size()), gw(w.size(), 0.0), gb(2, 0.0);
  serial::conv3d_backward<double>(s, x.data(), w.data(), g.data(), gx.data(), gw.data(), gb.data());
  const double h = 1e-3;
  double worst = 0.0;
  auto check = [&](std::vector<double>& p, const std::vector<double>& analytic) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double v = p[i];
      p[i] = v + h;
      const double up = loss();
      p[i] = v - h;
      const double down = loss();
      p[i] = v;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - analytic[i]) / std::max(1e-8, std::abs(fd) + std::abs(analytic[i])));
    }
  };
  check(x, gx);
  check(w, gw);
  check(b, gb);
  CHECK(worst < 1e-3);
}

namespace {

void check_close(const std::vector<float>& a, const std::vector<float>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == doctest::Approx(b[i]).epsilon(1e-4).scale(1.0));
}

}  // namespace

TEST_CASE("serial reference and parallel conv agree; parallel is thread-count invariant") {
  Rng rng(4);
  for (int trial = 0; trial < 6; ++trial) {
    const int k = trial % 2 ? 3 : 5;
    const auto s = shape(uniform_int(rng, 1, 3), uniform_int(rng, 1, 4), uniform_int(rng, 1, 5),
                         {uniform_int(rng, 5, 20), uniform_int(rng, 5, 20), uniform_int(rng, 5, 20)}, k,
                         uniform_int(rng, 1, 2), k / 2);
    const auto x = testing::random_floats(rng, s.batch * s.in_channels * s.in_volume());
    const auto w = testing::random_floats(rng, s.out_channels * s.patch_size());
    const auto b = testing::random_floats(rng, s.out_channels);
    const std::size_t out_n = s.batch * s.out_channels * s.out_volume();
    const auto g = testing::random_floats(rng, out_n);

    struct Run {
      std::vector<float> out, gx, gw, gb;
    };
    auto run = [&](bool par, int threads) {
      omp_set_num_threads(threads);
      Run r{std::vector<float>(out_n), std::vector<float>(x.size()), std::vector<float>(w.size()),
            std::vector<float>(b.size())};
      if (par) {
        parallel::conv3d_forward<float>(s, x.data(), w.data(), b.data(), r.out.data());
        parallel::conv3d_backward<float>(s, x.data(), w.data(), g.data(), r.gx.data(), r.gw.data(), r.gb.data());
      } else {
        serial::conv3d_forward<float>(s, x.data(), w.data(), b.data(), r.out.data());
        serial::conv3d_backward<float>(s, x.data(), w.data(), g.data(), r.gx.data(), r.gw.data(), r.gb.data());
      }
      return r;
    };
    const Run ref = run(false, 1), p1 = run(true, 1), p4 = run(true, 4);
    check_close(ref.out, p1.out);
    check_close(ref.gx, p1.gx);
    check_close(ref.gw, p1.gw);
    check_close(ref.gb, p1.gb);
    CHECK(p1.out == p4.out);
    CHECK(p1.gx == p4.gx);
    CHECK(p1.gw == p4.gw);
    CHECK(p1.gb == p4.gb);
  }
  omp_set_num_threads(omp_get_num_procs());
}

TEST_CASE("sparse conv matches the dense conv at the chosen voxels") {
  Rng rng(5);
  const auto s = shape(2, 3, 4, {6, 7, 8}, 5, 1, 2);
  const auto x = testing::random_doubles(rng, 2 * 3 * s.in_volume());
  const auto w = testing::random_doubles(rng, 4 * s.patch_size());
  const auto b = testing::random_doubles(rng, 4);
  const auto ref = dense_conv(s, x, w, b);
  std::vector<VoxelRef> voxels;
  for (int n = 0; n < 20; ++n)
    voxels.push_back({uniform_int(rng, 0, 1), uniform_int(rng, 0, 5), uniform_int(rng, 0, 6), uniform_int(rng, 0, 7)});
  std::vector<double> out(voxels.size() * 4);
  conv3d_at_forward<double>(s, voxels, x.data(), w.data(), b.data(), out.data());
  for (std::size_t m = 0; m < voxels.size(); ++m)
    for (int c = 0; c < 4; ++c) {
      const auto& v = voxels[m];
      const std::size_t idx = (((std::size_t)v.batch * 4 + c) * 6 + v.z) * 56 + v.y * 8 + v.x;
      CHECK(out[m * 4 + c] == doctest::Approx(ref[idx]).epsilon(1e-12));
    }

  // backward: adjoint of the forward map
  const auto g = testing::random_doubles(rng, out.size());
  std::vector<double> gx(x.size(), 0.0), gw(w.size(), 0.0), gb(4, 0.0);
  conv3d_at_backward<double>(s, voxels, x.data(), w.data(), g.data(), gx.data(), gw.data(), gb.data());
  const auto dx = testing::random_doubles(rng, x.size());
  std::vector<double> outdx(out.size());
  conv3d_at_forward<double>(s, voxels, dx.data(), w.data(), nullptr, outdx.data());
  CHECK(dot(outdx, g) == doctest::Approx(dot(dx, gx)).epsilon(1e-10));
}

TEST_CASE("upsample2x keeps constants and linear ramps") {
  const std::array<int, 3> size{3, 4, 5};
  std::vector<float> c(60, 2.5f), out(480);
  parallel::upsample2x_forward<float>(1, size, c.data(), out.data());
  for (float v : out) CHECK(v == doctest::Approx(2.5f));

  // ramp along x sampled at centers: input i -> i; output j sits at (j + 0.5) / 2 - 0.5
  std::vector<double> ramp(60), up(480);
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) ramp[(z * 4 + y) * 5 + x] = x;
  parallel::upsample2x_forward<double>(1, size, ramp.data(), up.data());
  for (int x = 1; x < 9; ++x) CHECK(up[x] == doctest::Approx((x + 0.5) / 2.0 - 0.5));
  CHECK(up[0] == doctest::Approx(0.0));  // clamped border
  CHECK(up[9] == doctest::Approx(4.0));
}

TEST_CASE("upsample2x backward is the adjoint of forward") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const std::array<int, 3> size{uniform_int(rng, 1, 6), uniform_int(rng, 1, 6), uniform_int(rng, 1, 6)};
    const int planes = uniform_int(rng, 1, 3);
    const std::size_t n = planes * size[0] * size[1] * size[2];
    const auto x = testing::random_doubles(rng, n);
    const auto y = testing::random_doubles(rng, 8 * n);
    std::vector<double> ux(8 * n), by(n);
    parallel::upsample2x_forward<double>(planes, size, x.data(), ux.data());
    parallel::upsample2x_backward<double>(planes, size, y.data(), by.data());
    CHECK(dot(ux, y) == doctest::Approx(dot(x, by)).epsilon(1e-4));

    std::vector<float> xf(x.begin(), x.end()), yf(y.begin(), y.end()), a(8 * n), b2(8 * n), c(n), d(n);
    serial::upsample2x_forward<float>(planes, size, xf.data(), a.data());
    parallel::upsample2x_forward<float>(planes, size, xf.data(), b2.data());
    CHECK(a == b2);
    serial::upsample2x_backward<float>(planes, size, yf.data(), c.data());
    parallel::upsample2x_backward<float>(planes, size, yf.data(), d.data());
    CHECK(c == d);
  }
}

TEST_CASE("gaussian taps are normalized with radius ceil(3 sigma)") {
  for (double sigma : {0.5, 1.0, 1.7}) {
    const auto t = gaussian_taps(sigma);
    CHECK(t.size() == 2 * static_cast<std::size_t>(std::ceil(3 * sigma)) + 1);
    double s = 0;
    for (double v : t) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  }
}
