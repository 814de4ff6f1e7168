#include <cmath>
#include <numbers>
#include <numeric>

#include "tl/errors.hpp"
#include "tl/kernels.hpp"
#include "tl/ops.hpp"

namespace tl {

using autograd::detail::record;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

std::vector<double> buffer(const Tensor& like) { return std::vector<double>(like.data().size()); }

// y = f(x) element-wise; backward multiplies by dydx(x, y).
template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D dydx) {
  std::vector<double> y = buffer(a);
  const auto x = a.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  Tensor out = Tensor::from(a.shape(), std::move(y));
  return record(out, {a}, [a, out, dydx](std::span<const double> g, std::span<const std::span<double>> gin) {
    const auto x = a.data();
    const auto y = out.data();
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * dydx(x[i], y[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> y = buffer(a);
  kernels::active().add(a.numel(), a.data().data(), b.data().data(), y.data());
  return record(Tensor::from(a.shape(), std::move(y)), {a, b},
                [](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (auto& gi : gin)
                    if (!gi.empty()) kernels::active().axpy(static_cast<int64_t>(g.size()), 1.0, g.data(), gi.data());
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> y = buffer(a);
  const auto x0 = a.data();
  const auto x1 = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x0[i] - x1[i];
  return record(Tensor::from(a.shape(), std::move(y)), {a, b},
                [](std::span<const double> g, std::span<const std::span<double>> gin) {
                  const auto n = static_cast<int64_t>(g.size());
                  if (!gin[0].empty()) kernels::active().axpy(n, 1.0, g.data(), gin[0].data());
                  if (!gin[1].empty()) kernels::active().axpy(n, -1.0, g.data(), gin[1].data());
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> y = buffer(a);
  kernels::active().mul(a.numel(), a.data().data(), b.data().data(), y.data());
  return record(Tensor::from(a.shape(), std::move(y)), {a, b},
                [a, b](std::span<const double> g, std::span<const std::span<double>> gin) {
                  const auto x0 = a.data();
                  const auto x1 = b.data();
                  if (!gin[0].empty())
                    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * x1[i];
                  if (!gin[1].empty())
                    for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] += g[i] * x0[i];
                });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> y = buffer(a);
  kernels::active().scale(a.numel(), s, a.data().data(), y.data());
  return record(Tensor::from(a.shape(), std::move(y)), {a},
                [s](std::span<const double> g, std::span<const std::span<double>> gin) {
                  kernels::active().axpy(static_cast<int64_t>(g.size()), s, g.data(), gin[0].data());
                });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor abs(const Tensor& a) {
  return unary(a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor silu(const Tensor& a) {
  return unary(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor gelu(const Tensor& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); },
      [](double x, double) {
        const double u = c * (x + 0.044715 * x * x * x);
        const double t = std::tanh(u);
        const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor softplus(const Tensor& a) {
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

Tensor sum(const Tensor& a) {
  const auto x = a.data();
  double s = 0.0;
  for (double v : x) s += v;
  return record(Tensor::scalar(s), {a}, [](std::span<const double> g, std::span<const std::span<double>> gin) {
    for (double& v : gin[0]) v += g[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  int64_t infer = -1;
  int64_t known = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      infer = static_cast<int64_t>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = a.numel() / known;
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  std::vector<double> y(a.data().begin(), a.data().end());
  return record(Tensor::from(std::move(shape), std::move(y)), {a},
                [](std::span<const double> g, std::span<const std::span<double>> gin) {
                  kernels::active().axpy(static_cast<int64_t>(g.size()), 1.0, g.data(), gin[0].data());
                });
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
  const int r = static_cast<int>(a.rank());
  if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axes rank mismatch");
  Shape out_shape(axes.size());
  std::vector<int64_t> in_strides(axes.size());
  int64_t st = 1;
  for (int i = r - 1; i >= 0; --i) {
    in_strides[static_cast<std::size_t>(i)] = st;
    st *= a.shape()[static_cast<std::size_t>(i)];
  }
  std::vector<int64_t> src_stride(axes.size());
  for (int i = 0; i < r; ++i) {
    out_shape[static_cast<std::size_t>(i)] = a.shape()[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
    src_stride[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
  }
  // Flat output index → flat input index.
  const int64_t n = a.numel();
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<std::size_t>(n));
  std::vector<int64_t> idx(axes.size(), 0);
  for (int64_t o = 0; o < n; ++o) {
    int64_t src = 0;
    for (int i = 0; i < r; ++i) src += idx[static_cast<std::size_t>(i)] * src_stride[static_cast<std::size_t>(i)];
    (*map)[static_cast<std::size_t>(o)] = src;
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < out_shape[static_cast<std::size_t>(i)]) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  std::vector<double> y(static_cast<std::size_t>(n));
  const auto x = a.data();
  for (int64_t o = 0; o < n; ++o) y[static_cast<std::size_t>(o)] = x[static_cast<std::size_t>((*map)[static_cast<std::size_t>(o)])];
  return record(Tensor::from(std::move(out_shape), std::move(y)), {a},
                [map](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t o = 0; o < g.size(); ++o) gin[0][static_cast<std::size_t>((*map)[o])] += g[o];
                });
}

Tensor add_bias(const Tensor& x, const Tensor& bias, int axis) {
  const int64_t c = x.dim(axis);
  if (axis < 0) axis += static_cast<int>(x.rank());
  if (bias.numel() != c)
    throw ShapeError("add_bias: bias of " + std::to_string(bias.numel()) + " values for axis of size " +
                     std::to_string(c));
  int64_t inner = 1;
  for (int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[static_cast<std::size_t>(i)];
  const int64_t outer = x.numel() / (c * inner);
  std::vector<double> y(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t ch = 0; ch < c; ++ch) {
      double* row = y.data() + (o * c + ch) * inner;
      for (int64_t i = 0; i < inner; ++i) row[i] += b[static_cast<std::size_t>(ch)];
    }
  return record(Tensor::from(x.shape(), std::move(y)), {x, bias},
                [outer, c, inner](std::span<const double> g, std::span<const std::span<double>> gin) {
                  if (!gin[0].empty()) kernels::active().axpy(static_cast<int64_t>(g.size()), 1.0, g.data(), gin[0].data());
                  if (!gin[1].empty())
                    for (int64_t o = 0; o < outer; ++o)
                      for (int64_t ch = 0; ch < c; ++ch) {
                        const double* row = g.data() + (o * c + ch) * inner;
                        double s = 0.0;
                        for (int64_t i = 0; i < inner; ++i) s += row[i];
                        gin[1][static_cast<std::size_t>(ch)] += s;
                      }
                });
}

Tensor straight_through(const Tensor& z_hat, const Tensor& z_q) {
  if (z_hat.shape() != z_q.shape())
    throw ContractError("straight_through: shape mismatch " + shape_str(z_hat.shape()) + " vs " +
                        shape_str(z_q.shape()));
  std::vector<double> y(z_q.data().begin(), z_q.data().end());
  return record(Tensor::from(z_q.shape(), std::move(y)), {z_hat},
                [](std::span<const double> g, std::span<const std::span<double>> gin) {
                  kernels::active().axpy(static_cast<int64_t>(g.size()), 1.0, g.data(), gin[0].data());
                });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout rate must be < 1");
  auto mask = std::make_shared<std::vector<double>>(x.data().size());
  const double keep = 1.0 / (1.0 - p);
  for (double& m : *mask) m = rng.uniform() < p ? 0.0 : keep;
  std::vector<double> y(x.data().size());
  kernels::active().mul(x.numel(), x.data().data(), mask->data(), y.data());
  return record(Tensor::from(x.shape(), std::move(y)), {x},
                [mask](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * (*mask)[i];
                });
}

}  // namespace tl
