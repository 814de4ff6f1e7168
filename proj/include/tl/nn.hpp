#pragma once

#include <string>
#include <vector>

#include "tl/ops.hpp"
#include "tl/random.hpp"
#include "tl/tensor.hpp"

namespace tl::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

// Trainable leaf filled with U(−bound, bound).
Tensor uniform_param(Shape shape, double bound, Rng& rng);
Tensor normal_param(Shape shape, double stddev, Rng& rng);
Tensor constant_param(Shape shape, double value);

void set_trainable(const ParamList& params, bool on);
void zero_grads(const ParamList& params);
// FNV-1a over parameter bytes; detects any mutation.
uint64_t checksum(const ParamList& params);
int64_t count_values(const ParamList& params);

struct Conv2d {
  Tensor weight;  // O×C×k×k
  Tensor bias;    // O
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }
  void collect(ParamList& out, const std::string& prefix) const;
};

struct Linear {
  Tensor weight;  // in×out
  Tensor bias;    // out

  Linear() = default;
  Linear(int in_features, int out_features, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(ParamList& out, const std::string& prefix) const;
};

struct GroupNorm {
  Tensor gamma, beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(int channels, int groups);
  Tensor operator()(const Tensor& x) const { return group_norm(x, groups, gamma, beta); }
  void collect(ParamList& out, const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(int features);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(ParamList& out, const std::string& prefix) const;
};

}  // namespace tl::nn
