#pragma once

#include <span>
#include <vector>

#include "tl/random.hpp"
#include "tl/tensor.hpp"

// Differentiable primitives. Every op records itself on the autograd tape when an
// input requires grad; each has a hand-written backward rule verified against
// central finite differences in tests/test_ops.cpp.
namespace tl {

// Element-wise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor leaky_relu(const Tensor& a, double slope);
Tensor softplus(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// Reductions to a scalar of shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// out.shape[i] = a.shape[axes[i]].
Tensor permute(const Tensor& a, const std::vector<int>& axes);
// Adds bias[C] along `axis` (size C) with broadcasting over every other axis.
Tensor add_bias(const Tensor& x, const Tensor& bias, int axis);

// [M×K]·[K×N]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[M×in]·w[in×out] (+ bias[out] when defined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});

// Cross-correlation. x[B×C×H×W], w[O×C×k×k], bias[O] optional.
// H' = (H + 2·pad − k)/stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
Tensor upsample_nearest2x(const Tensor& x);
// x[B×C×...]; statistics over (C/groups channels × spatial) per sample.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);
// Normalizes over the last dim.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// −∞ entries map to exactly 0; an all −∞ slice throws NumericError.
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);
// Mean over rows with target ≥ 0 of −log softmax(logits[row])[target]; rows with a
// negative target are ignored. logits[N×V].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

// Rows of table[V×D] selected by ids → [n×D].
Tensor embedding(std::span<const int> ids, const Tensor& table);

// Multi-head scaled dot-product attention on row-stacked sequences:
// q,k,v are [batch·N × d], heads split d evenly. Causal masks key j > query i.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int heads,
                 bool causal);

// Value of z_q, gradient routed unchanged to z_hat (z_q receives none).
Tensor straight_through(const Tensor& z_hat, const Tensor& z_q);

Tensor dropout(const Tensor& x, double p, Rng& rng);

namespace detail {

// Per-row attention used by both the fused op and incremental decoding, so the two
// paths round identically. Writes weights[0..n) and out[0..dv).
void attend_row(const double* q, const double* keys, const double* values, int64_t n,
                int64_t dk, int64_t dv, int64_t key_stride, int64_t value_stride,
                double* weights, double* out);

}  // namespace detail
}  // namespace tl
