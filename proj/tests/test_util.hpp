#pragma once

#include <cstring>
#include <vector>

#include "tl/random.hpp"
#include "tl/tensor.hpp"

namespace tl::testing {

inline Tensor randn(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

inline Tensor rand_image(int64_t B, int64_t H, int64_t W, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(B * 3 * H * W));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from({B, 3, H, W}, std::move(v));
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace tl::testing
