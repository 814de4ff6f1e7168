#include "tl/nn.hpp"

#include <cmath>
#include <cstring>

namespace tl::nn {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor normal_param(Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = stddev * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor constant_param(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

void set_trainable(const ParamList& params, bool on) {
  for (const auto& p : params) Tensor(p.tensor).set_requires_grad(on);
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) Tensor(p.tensor).zero_grad();
}

uint64_t checksum(const ParamList& params) {
  uint64_t h = 1469598103934665603ull;
  for (const auto& p : params)
    for (double v : p.tensor.data()) {
      uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 1099511628211ull;
      }
    }
  return h;
}

int64_t count_values(const ParamList& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
  weight = uniform_param({out_channels, in_channels, kernel, kernel}, bound, rng);
  bias = uniform_param({out_channels}, bound, rng);
}

void Conv2d::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight});
  out.push_back({prefix + "bias", bias});
}

Linear::Linear(int in_features, int out_features, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  weight = uniform_param({in_features, out_features}, bound, rng);
  bias = uniform_param({out_features}, bound, rng);
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight});
  out.push_back({prefix + "bias", bias});
}

GroupNorm::GroupNorm(int channels, int groups_)
    : gamma(constant_param({channels}, 1.0)), beta(constant_param({channels}, 0.0)), groups(groups_) {}

void GroupNorm::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "gamma", gamma});
  out.push_back({prefix + "beta", beta});
}

LayerNorm::LayerNorm(int features)
    : gamma(constant_param({features}, 1.0)), beta(constant_param({features}, 0.0)) {}

void LayerNorm::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "gamma", gamma});
  out.push_back({prefix + "beta", beta});
}

}  // namespace tl::nn
