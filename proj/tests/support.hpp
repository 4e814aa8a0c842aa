#pragma once

// Hand-rolled generators shared by the unit tests.

#include <vector>

#include "voxgrasp/geometry.hpp"
#include "voxgrasp/rng.hpp"

namespace testing {

using voxgrasp::Rng;

inline std::vector<float> random_floats(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(voxgrasp::uniform(rng, lo, hi));
  return v;
}

inline std::vector<double> random_doubles(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = voxgrasp::uniform(rng, lo, hi);
  return v;
}

inline voxgrasp::Quat random_quat(Rng& rng) {
  // Marsaglia: uniform on S^3
  std::normal_distribution<double> g;
  voxgrasp::Quat q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized();
}

inline voxgrasp::Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> g;
  voxgrasp::Vec3 v(g(rng), g(rng), g(rng));
  return v.normalized();
}

}  // namespace testing
