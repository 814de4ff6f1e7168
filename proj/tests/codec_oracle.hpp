#pragma once

#include <algorithm>
#include <cmath>

#include "tl/codec.hpp"

namespace tl::testing {

// The codec objective with every stop-gradient and the quantization offset
// z_q − ẑ frozen at a base point. It is an ordinary differentiable function,
// and its gradient at the base point is what the straight-through codec should
// report, so central differences of it are an independent oracle.
class FrozenCodecObjective {
 public:
  FrozenCodecObjective(const Codec& codec, const Tensor& x) : codec_(codec), x_(x) {
    autograd::NoGradGuard ng;
    const Reconstruction r = codec.reconstruct(x);
    indices_ = r.q.indices;
    z_hat0_ = r.z_hat.detach();
    z_q0_ = r.q.z_q.detach();
  }

  const std::vector<IndexGrid>& indices() const { return indices_; }

  // The real code path with the assignment held fixed.
  Tensor actual(const Tensor& x) const { return codec_.vq_loss(x, codec_.reconstruct_with(x, indices_)); }

  Tensor surrogate(const Tensor& x) const {
    const Tensor z_hat = channels_last(codec_.encode(x));
    const Tensor z_q = lookup(indices_, codec_.codebook());
    const Tensor x_hat = codec_.decode(channels_first(add(z_hat, sub(z_q0_, z_hat0_))));
    const double inv_p = 1.0 / static_cast<double>(z_hat.numel() / z_hat.dim(-1));
    return add(add(codec_.rec_loss(x, x_hat), scale(sum(square(sub(z_hat0_, z_q))), inv_p)),
               scale(sum(square(sub(z_hat, z_q0_))), codec_.config().beta * inv_p));
  }

  // Worst per-coordinate relative error between the analytic gradient of
  // actual() and central differences of surrogate(), w.r.t. a parameter.
  double check_param(Tensor param, double h = 1e-5, double floor = 1e-8) const {
    const bool tracked = param.requires_grad();
    param.set_requires_grad(true);
    autograd::clear_tape();
    const Tensor inputs[] = {param};
    const auto analytic = autograd::grad(actual(x_), inputs, false).front();
    autograd::NoGradGuard ng;
    auto values = param.mutable_data();
    double worst = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double o = values[i];
      values[i] = o + h;
      const double up = surrogate(x_).item();
      values[i] = o - h;
      const double down = surrogate(x_).item();
      values[i] = o;
      worst = std::max(worst, rel(analytic[i], (up - down) / (2 * h), floor));
    }
    param.set_requires_grad(tracked);
    return worst;
  }

  double check_input(double h = 1e-5, double floor = 1e-8) const {
    const Tensor probe = Tensor::from(x_.shape(), std::vector<double>(x_.data().begin(), x_.data().end()), true);
    autograd::clear_tape();
    const Tensor inputs[] = {probe};
    const auto analytic = autograd::grad(actual(probe), inputs, false).front();
    autograd::NoGradGuard ng;
    std::vector<double> v(x_.data().begin(), x_.data().end());
    double worst = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double o = v[i];
      v[i] = o + h;
      const double up = surrogate(Tensor::from(x_.shape(), v)).item();
      v[i] = o - h;
      const double down = surrogate(Tensor::from(x_.shape(), v)).item();
      v[i] = o;
      worst = std::max(worst, rel(analytic[i], (up - down) / (2 * h), floor));
    }
    return worst;
  }

 private:
  static double rel(double a, double n, double floor) {
    return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor});
  }

  const Codec& codec_;
  Tensor x_;
  std::vector<IndexGrid> indices_;
  Tensor z_hat0_, z_q0_;
};

}  // namespace tl::testing
