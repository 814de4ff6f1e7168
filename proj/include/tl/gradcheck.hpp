#pragma once

#include <functional>

#include "tl/tensor.hpp"

namespace tl {

// Max over coordinates of |analytic − central difference| / max(|analytic|, |numeric|, floor).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5,
                  double floor = 1e-8);

// Same check for a tensor captured by the closure (a model parameter): the values
// are perturbed in place and restored.
double grad_check_param(const std::function<Tensor()>& f, Tensor param, double h = 1e-5, double floor = 1e-8);

}  // namespace tl
