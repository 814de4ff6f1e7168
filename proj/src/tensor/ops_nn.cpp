#include <cmath>
#include <limits>

#include "tl/errors.hpp"
#include "tl/kernels.hpp"
#include "tl/ops.hpp"

namespace tl {

using autograd::detail::record;

namespace {

struct AxisLayout {
  int64_t outer, len, inner;
};

AxisLayout axis_layout(const Tensor& x, int axis) {
  const int64_t len = x.dim(axis);
  if (axis < 0) axis += static_cast<int>(x.rank());
  int64_t inner = 1;
  for (int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[static_cast<std::size_t>(i)];
  return {x.numel() / (len * inner), len, inner};
}

// Max over the slice ignoring −∞; throws when every entry is −∞.
double slice_max(const double* p, int64_t len, int64_t stride) {
  double m = -std::numeric_limits<double>::infinity();
  for (int64_t j = 0; j < len; ++j) m = std::max(m, p[j * stride]);
  if (m == -std::numeric_limits<double>::infinity())
    throw NumericError("softmax: every entry of a slice is -inf (undefined distribution)");
  if (!std::isfinite(m)) throw NumericError("softmax: non-finite logit");
  return m;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const AxisLayout L = axis_layout(x, axis);
  std::vector<double> y(x.data().size());
  const double* in = x.data().data();
  for (int64_t o = 0; o < L.outer; ++o)
    for (int64_t i = 0; i < L.inner; ++i) {
      const int64_t base = o * L.len * L.inner + i;
      const double m = slice_max(in + base, L.len, L.inner);
      double s = 0.0;
      for (int64_t j = 0; j < L.len; ++j) {
        const double e = std::exp(in[base + j * L.inner] - m);
        y[static_cast<std::size_t>(base + j * L.inner)] = e;
        s += e;
      }
      for (int64_t j = 0; j < L.len; ++j) y[static_cast<std::size_t>(base + j * L.inner)] /= s;
    }
  Tensor out = Tensor::from(x.shape(), std::move(y));
  return record(out, {x}, [out, L](std::span<const double> g, std::span<const std::span<double>> gin) {
    const auto y = out.data();
    for (int64_t o = 0; o < L.outer; ++o)
      for (int64_t i = 0; i < L.inner; ++i) {
        const int64_t base = o * L.len * L.inner + i;
        double dotgy = 0.0;
        for (int64_t j = 0; j < L.len; ++j) {
          const auto f = static_cast<std::size_t>(base + j * L.inner);
          dotgy += g[f] * y[f];
        }
        for (int64_t j = 0; j < L.len; ++j) {
          const auto f = static_cast<std::size_t>(base + j * L.inner);
          gin[0][f] += y[f] * (g[f] - dotgy);
        }
      }
  });
}

Tensor log_softmax(const Tensor& x, int axis) {
  const AxisLayout L = axis_layout(x, axis);
  std::vector<double> y(x.data().size());
  const double* in = x.data().data();
  for (int64_t o = 0; o < L.outer; ++o)
    for (int64_t i = 0; i < L.inner; ++i) {
      const int64_t base = o * L.len * L.inner + i;
      const double m = slice_max(in + base, L.len, L.inner);
      double s = 0.0;
      for (int64_t j = 0; j < L.len; ++j) s += std::exp(in[base + j * L.inner] - m);
      const double lse = m + std::log(s);
      for (int64_t j = 0; j < L.len; ++j)
        y[static_cast<std::size_t>(base + j * L.inner)] = in[base + j * L.inner] - lse;
    }
  Tensor out = Tensor::from(x.shape(), std::move(y));
  return record(out, {x}, [out, L](std::span<const double> g, std::span<const std::span<double>> gin) {
    const auto y = out.data();
    for (int64_t o = 0; o < L.outer; ++o)
      for (int64_t i = 0; i < L.inner; ++i) {
        const int64_t base = o * L.len * L.inner + i;
        double gs = 0.0;
        for (int64_t j = 0; j < L.len; ++j) gs += g[static_cast<std::size_t>(base + j * L.inner)];
        for (int64_t j = 0; j < L.len; ++j) {
          const auto f = static_cast<std::size_t>(base + j * L.inner);
          gin[0][f] += g[f] - std::exp(y[f]) * gs;
        }
      }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) != static_cast<int64_t>(targets.size()))
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  const int64_t N = logits.dim(0), V = logits.dim(1);
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N * V), 0.0);
  auto tgt = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  double total = 0.0;
  int64_t count = 0;
  const double* in = logits.data().data();
  for (int64_t r = 0; r < N; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0) continue;
    if (t >= V) throw ContractError("cross_entropy: target " + std::to_string(t) + " outside vocabulary of " + std::to_string(V));
    const double* row = in + r * V;
    const double m = slice_max(row, V, 1);
    double s = 0.0;
    double* p = probs->data() + r * V;
    for (int64_t j = 0; j < V; ++j) {
      p[j] = std::exp(row[j] - m);
      s += p[j];
    }
    for (int64_t j = 0; j < V; ++j) p[j] /= s;
    total += m + std::log(s) - row[t];
    ++count;
  }
  if (count == 0) throw ContractError("cross_entropy: no target positions");
  const double inv = 1.0 / static_cast<double>(count);
  return record(Tensor::scalar(total * inv), {logits},
                [probs, tgt, N, V, inv](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (int64_t r = 0; r < N; ++r) {
                    const int t = (*tgt)[static_cast<std::size_t>(r)];
                    if (t < 0) continue;
                    const double* p = probs->data() + r * V;
                    double* d = gin[0].data() + r * V;
                    for (int64_t j = 0; j < V; ++j) d[j] += g[0] * inv * (p[j] - (j == t ? 1.0 : 0.0));
                  }
                });
}

Tensor embedding(std::span<const int> ids, const Tensor& table) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be V×D, got " + shape_str(table.shape()));
  const int64_t V = table.dim(0), D = table.dim(1);
  const auto n = static_cast<int64_t>(ids.size());
  if (n == 0) throw ContractError("embedding: empty id list");
  std::vector<double> y(static_cast<std::size_t>(n * D));
  const double* t = table.data().data();
  for (int64_t i = 0; i < n; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= V)
      throw ContractError("embedding: index " + std::to_string(id) + " outside [0, " + std::to_string(V) + ")");
    std::copy(t + id * D, t + (id + 1) * D, y.begin() + i * D);
  }
  auto saved = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  return record(Tensor::from({n, D}, std::move(y)), {table},
                [saved, D](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t i = 0; i < saved->size(); ++i)
                    kernels::active().axpy(D, 1.0, g.data() + static_cast<int64_t>(i) * D,
                                           gin[0].data() + (*saved)[i] * D);
                });
}

namespace detail {

void attend_row(const double* q, const double* keys, const double* values, int64_t n, int64_t dk,
                int64_t dv, int64_t key_stride, int64_t value_stride, double* weights, double* out) {
  const auto& kt = kernels::active();
  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
  double m = -std::numeric_limits<double>::infinity();
  for (int64_t j = 0; j < n; ++j) {
    weights[j] = kt.dot(q, keys + j * key_stride, dk) * sc;
    m = std::max(m, weights[j]);
  }
  double s = 0.0;
  for (int64_t j = 0; j < n; ++j) {
    weights[j] = std::exp(weights[j] - m);
    s += weights[j];
  }
  std::fill(out, out + dv, 0.0);
  for (int64_t j = 0; j < n; ++j) {
    weights[j] /= s;
    kt.axpy(dv, weights[j], values + j * value_stride, out);
  }
}

}  // namespace detail

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int heads, bool causal) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.dim(0) != v.dim(0) || v.rank() != 2)
    throw ShapeError("attention: incompatible q/k/v shapes " + shape_str(q.shape()) + ", " +
                     shape_str(k.shape()) + ", " + shape_str(v.shape()));
  if (batch < 1 || q.dim(0) % batch != 0) throw ShapeError("attention: rows not divisible by batch");
  if (heads < 1 || q.dim(1) % heads != 0 || v.dim(1) % heads != 0)
    throw ShapeError("attention: width not divisible by head count");
  const int64_t N = q.dim(0) / batch, dq = q.dim(1), dvw = v.dim(1);
  const int64_t dk = dq / heads, dv = dvw / heads;
  auto P = std::make_shared<std::vector<double>>(static_cast<std::size_t>(batch * heads * N * N), 0.0);
  std::vector<double> y(static_cast<std::size_t>(batch * N * dvw));
  const double* Q = q.data().data();
  const double* K = k.data().data();
  const double* Vv = v.data().data();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t h = 0; h < heads; ++h) {
      double* Pbh = P->data() + (b * heads + h) * N * N;
      for (int64_t i = 0; i < N; ++i) {
        const int64_t n = causal ? i + 1 : N;
        detail::attend_row(Q + (b * N + i) * dq + h * dk, K + b * N * dq + h * dk, Vv + b * N * dvw + h * dv, n,
                           dk, dv, dq, dvw, Pbh + i * N, y.data() + (b * N + i) * dvw + h * dv);
      }
    }
  return record(Tensor::from({batch * N, dvw}, std::move(y)), {q, k, v},
                [q, k, v, P, batch, heads, N, dq, dvw, dk, dv, causal](std::span<const double> g,
                                                                        std::span<const std::span<double>> gin) {
                  const auto& kt = kernels::active();
                  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
                  const double* Q = q.data().data();
                  const double* K = k.data().data();
                  const double* Vv = v.data().data();
                  std::vector<double> dS(static_cast<std::size_t>(N));
                  for (int64_t b = 0; b < batch; ++b)
                    for (int64_t h = 0; h < heads; ++h) {
                      const double* Pbh = P->data() + (b * heads + h) * N * N;
                      for (int64_t i = 0; i < N; ++i) {
                        const int64_t n = causal ? i + 1 : N;
                        const double* gi = g.data() + (b * N + i) * dvw + h * dv;
                        const double* Pi = Pbh + i * N;
                        double acc = 0.0;
                        for (int64_t j = 0; j < n; ++j) {
                          dS[static_cast<std::size_t>(j)] = kt.dot(gi, Vv + (b * N + j) * dvw + h * dv, dv);
                          acc += Pi[j] * dS[static_cast<std::size_t>(j)];
                        }
                        for (int64_t j = 0; j < n; ++j) {
                          const double ds = Pi[j] * (dS[static_cast<std::size_t>(j)] - acc) * sc;
                          if (!gin[0].empty())
                            kt.axpy(dk, ds, K + (b * N + j) * dq + h * dk, gin[0].data() + (b * N + i) * dq + h * dk);
                          if (!gin[1].empty())
                            kt.axpy(dk, ds, Q + (b * N + i) * dq + h * dk, gin[1].data() + (b * N + j) * dq + h * dk);
                          if (!gin[2].empty())
                            kt.axpy(dv, Pi[j], gi, gin[2].data() + (b * N + j) * dvw + h * dv);
                        }
                      }
                    }
                });
}

}  // namespace tl
