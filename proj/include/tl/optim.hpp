#pragma once

#include <cstdint>
#include <vector>

#include "tl/nn.hpp"

namespace tl {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moment estimation with bias correction. Parameters whose grad buffer
// was never allocated are skipped.
class Adam {
 public:
  Adam() = default;
  Adam(nn::ParamList params, AdamConfig cfg);

  void zero_grad();
  void step();

  int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const nn::ParamList& params() const { return params_; }

  // Moment buffers as "<prefix>m.<name>" / "<prefix>v.<name>" tensors.
  void export_state(nn::ParamList& out, const std::string& prefix) const;
  void import_state(const nn::ParamList& in, const std::string& prefix, int64_t steps);

 private:
  nn::ParamList params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace tl
