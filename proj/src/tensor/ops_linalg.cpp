#include "tl/errors.hpp"
#include "tl/kernels.hpp"
#include "tl/ops.hpp"

namespace tl {

using autograd::detail::record;

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<double> c(static_cast<std::size_t>(M * N), 0.0);
  kernels::active().gemm_nn(M, N, K, a.data().data(), K, b.data().data(), N, c.data(), N);
  return record(Tensor::from({M, N}, std::move(c)), {a, b},
                [a, b, M, N, K](std::span<const double> g, std::span<const std::span<double>> gin) {
                  const auto& kt = kernels::active();
                  // da = g·bᵗ, db = aᵗ·g
                  if (!gin[0].empty()) kt.gemm_nt(M, K, N, g.data(), N, b.data().data(), N, gin[0].data(), K);
                  if (!gin[1].empty()) kt.gemm_tn(K, N, M, a.data().data(), K, g.data(), N, gin[1].data(), N);
                });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  const int64_t M = x.dim(0), K = x.dim(1), N = w.dim(1);
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != N)
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " for " + std::to_string(N) + " outputs");
  std::vector<double> y(static_cast<std::size_t>(M * N), 0.0);
  if (has_bias) {
    const auto b = bias.data();
    for (int64_t i = 0; i < M; ++i) std::copy(b.begin(), b.end(), y.begin() + i * N);
  }
  kernels::active().gemm_nn(M, N, K, x.data().data(), K, w.data().data(), N, y.data(), N);
  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return record(Tensor::from({M, N}, std::move(y)), std::move(inputs),
                [x, w, M, N, K, has_bias](std::span<const double> g, std::span<const std::span<double>> gin) {
                  const auto& kt = kernels::active();
                  if (!gin[0].empty()) kt.gemm_nt(M, K, N, g.data(), N, w.data().data(), N, gin[0].data(), K);
                  if (!gin[1].empty()) kt.gemm_tn(K, N, M, x.data().data(), K, g.data(), N, gin[1].data(), N);
                  if (has_bias && !gin[2].empty())
                    for (int64_t i = 0; i < M; ++i) kt.axpy(N, 1.0, g.data() + i * N, gin[2].data());
                });
}

}  // namespace tl
