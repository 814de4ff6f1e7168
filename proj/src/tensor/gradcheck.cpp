#include "tl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tl {
namespace {

double relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double denom = std::max({std::fabs(a), std::fabs(n), floor});
    worst = std::max(worst, std::fabs(a - n) / denom);
  }
  return worst;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h, double floor) {
  Tensor probe = Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  autograd::clear_tape();
  const Tensor loss = f(probe);
  const Tensor inputs[] = {probe};
  const std::vector<double> analytic = autograd::grad(loss, inputs, false).front();

  autograd::NoGradGuard guard;
  std::vector<double> numeric(analytic.size());
  std::vector<double> values(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double up = f(Tensor::from(x.shape(), values)).item();
    values[i] = orig - h;
    const double down = f(Tensor::from(x.shape(), values)).item();
    values[i] = orig;
    numeric[i] = (up - down) / (2.0 * h);
  }
  return relative_error(analytic, numeric, floor);
}

double grad_check_param(const std::function<Tensor()>& f, Tensor param, double h, double floor) {
  const bool was_tracked = param.requires_grad();
  param.set_requires_grad(true);
  autograd::clear_tape();
  const Tensor loss = f();
  const Tensor inputs[] = {param};
  const std::vector<double> analytic = autograd::grad(loss, inputs, false).front();

  autograd::NoGradGuard guard;
  std::vector<double> numeric(analytic.size());
  auto values = param.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double up = f().item();
    values[i] = orig - h;
    const double down = f().item();
    values[i] = orig;
    numeric[i] = (up - down) / (2.0 * h);
  }
  param.set_requires_grad(was_tracked);
  return relative_error(analytic, numeric, floor);
}

}  // namespace tl
