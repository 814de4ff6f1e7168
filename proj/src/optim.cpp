#include "tl/optim.hpp"

#include <cmath>

#include "tl/errors.hpp"

namespace tl {

Adam::Adam(nn::ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr <= 0.0) throw ConfigError("optimizer learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
  }
}

void Adam::zero_grad() { nn::zero_grads(params_); }

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor p = params_[k].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto x = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      x[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

void Adam::export_state(nn::ParamList& out, const std::string& prefix) const {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.push_back({prefix + "m." + params_[k].name, Tensor::from(params_[k].tensor.shape(), m_[k])});
    out.push_back({prefix + "v." + params_[k].name, Tensor::from(params_[k].tensor.shape(), v_[k])});
  }
}

void Adam::import_state(const nn::ParamList& in, const std::string& prefix, int64_t steps) {
  auto find = [&](const std::string& name) -> const Tensor* {
    for (const auto& e : in)
      if (e.name == name) return &e.tensor;
    return nullptr;
  };
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Tensor* m = find(prefix + "m." + params_[k].name);
    const Tensor* v = find(prefix + "v." + params_[k].name);
    if (!m || !v) throw IoError("optimizer state missing for " + params_[k].name);
    m_[k].assign(m->data().begin(), m->data().end());
    v_[k].assign(v->data().begin(), v->data().end());
  }
  t_ = steps;
}

}  // namespace tl
