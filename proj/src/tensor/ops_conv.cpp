#include <cmath>

#include "tl/errors.hpp"
#include "tl/kernels.hpp"
#include "tl/ops.hpp"

namespace tl {

using autograd::detail::record;

namespace {

struct ConvGeometry {
  int64_t B, C, H, W, O, k, stride, pad, Ho, Wo;
  int64_t P() const { return Ho * Wo; }
  int64_t rows() const { return C * k * k; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// cols[(c·k + ki)·k + kj][oy·Wo + ox] = x[c][oy·s − p + ki][ox·s − p + kj] (0 outside).
void im2col(const ConvGeometry& g, const double* x, double* cols) {
  for (int64_t c = 0; c < g.C; ++c)
    for (int64_t ki = 0; ki < g.k; ++ki)
      for (int64_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((c * g.k + ki) * g.k + kj) * g.P();
        const double* plane = x + c * g.H * g.W;
        for (int64_t oy = 0; oy < g.Ho; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + ki;
          double* out = row + oy * g.Wo;
          if (iy < 0 || iy >= g.H) {
            std::fill(out, out + g.Wo, 0.0);
            continue;
          }
          const double* line = plane + iy * g.W;
          for (int64_t ox = 0; ox < g.Wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kj;
            out[ox] = (ix >= 0 && ix < g.W) ? line[ix] : 0.0;
          }
        }
      }
}

void col2im(const ConvGeometry& g, const double* cols, double* dx) {
  for (int64_t c = 0; c < g.C; ++c)
    for (int64_t ki = 0; ki < g.k; ++ki)
      for (int64_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((c * g.k + ki) * g.k + kj) * g.P();
        double* plane = dx + c * g.H * g.W;
        for (int64_t oy = 0; oy < g.Ho; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.H) continue;
          double* line = plane + iy * g.W;
          const double* in = row + oy * g.Wo;
          for (int64_t ox = 0; ox < g.Wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.W) line[ix] += in[ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(2) != w.dim(3) || x.dim(1) != w.dim(1))
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with kernel " + shape_str(w.shape()));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad, 0, 0};
  if (g.k > g.H + 2 * pad || g.k > g.W + 2 * pad)
    throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " larger than padded input " + shape_str(x.shape()));
  g.Ho = (g.H + 2 * pad - g.k) / stride + 1;
  g.Wo = (g.W + 2 * pad - g.k) / stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != g.O) throw ShapeError("conv2d: bias size does not match output channels");

  const auto& kt = kernels::active();
  std::vector<double> y(static_cast<std::size_t>(g.B * g.O * g.P()), 0.0);
  std::vector<double> cols(g.pointwise() ? 0 : static_cast<std::size_t>(g.rows() * g.P()));
  for (int64_t b = 0; b < g.B; ++b) {
    double* yb = y.data() + b * g.O * g.P();
    if (has_bias)
      for (int64_t o = 0; o < g.O; ++o) std::fill(yb + o * g.P(), yb + (o + 1) * g.P(), bias.data()[static_cast<std::size_t>(o)]);
    const double* xb = x.data().data() + b * g.C * g.H * g.W;
    const double* src = xb;
    if (!g.pointwise()) {
      im2col(g, xb, cols.data());
      src = cols.data();
    }
    kt.gemm_nn(g.O, g.P(), g.rows(), w.data().data(), g.rows(), src, g.P(), yb, g.P());
  }
  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return record(Tensor::from({g.B, g.O, g.Ho, g.Wo}, std::move(y)), std::move(inputs),
                [x, w, g, has_bias](std::span<const double> gout, std::span<const std::span<double>> gin) {
                  const auto& kt = kernels::active();
                  std::vector<double> cols(g.pointwise() ? 0 : static_cast<std::size_t>(g.rows() * g.P()));
                  std::vector<double> dcols(cols.size());
                  for (int64_t b = 0; b < g.B; ++b) {
                    const double* gb = gout.data() + b * g.O * g.P();
                    const double* xb = x.data().data() + b * g.C * g.H * g.W;
                    if (!gin[1].empty()) {
                      const double* src = xb;
                      if (!g.pointwise()) {
                        im2col(g, xb, cols.data());
                        src = cols.data();
                      }
                      kt.gemm_nt(g.O, g.rows(), g.P(), gb, g.P(), src, g.P(), gin[1].data(), g.rows());
                    }
                    if (!gin[0].empty()) {
                      double* dxb = gin[0].data() + b * g.C * g.H * g.W;
                      if (g.pointwise()) {
                        kt.gemm_tn(g.rows(), g.P(), g.O, w.data().data(), g.rows(), gb, g.P(), dxb, g.P());
                      } else {
                        std::fill(dcols.begin(), dcols.end(), 0.0);
                        kt.gemm_tn(g.rows(), g.P(), g.O, w.data().data(), g.rows(), gb, g.P(), dcols.data(), g.P());
                        col2im(g, dcols.data(), dxb);
                      }
                    }
                    if (has_bias && !gin[2].empty())
                      for (int64_t o = 0; o < g.O; ++o) {
                        double s = 0.0;
                        for (int64_t p = 0; p < g.P(); ++p) s += gb[o * g.P() + p];
                        gin[2][static_cast<std::size_t>(o)] += s;
                      }
                  }
                });
}

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("upsample_nearest2x: expected B×C×H×W, got " + shape_str(x.shape()));
  const int64_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<double> y(static_cast<std::size_t>(planes * 4 * H * W));
  const auto in = x.data();
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t r = 0; r < 2 * H; ++r)
      for (int64_t c = 0; c < 2 * W; ++c)
        y[static_cast<std::size_t>((p * 2 * H + r) * 2 * W + c)] = in[static_cast<std::size_t>((p * H + r / 2) * W + c / 2)];
  return record(Tensor::from({x.dim(0), x.dim(1), 2 * H, 2 * W}, std::move(y)), {x},
                [planes, H, W](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (int64_t p = 0; p < planes; ++p)
                    for (int64_t r = 0; r < 2 * H; ++r)
                      for (int64_t c = 0; c < 2 * W; ++c)
                        gin[0][static_cast<std::size_t>((p * H + r / 2) * W + c / 2)] +=
                            g[static_cast<std::size_t>((p * 2 * H + r) * 2 * W + c)];
                });
}

namespace {

// Shared normalization core: `groups` contiguous segments of length n per outer
// index, each affine channel spanning `channel_span` elements.
struct NormLayout {
  int64_t segments;      // number of independent normalization groups
  int64_t n;             // elements per group
  int64_t channels;      // affine parameter count
  int64_t channel_span;  // contiguous elements sharing one affine channel
};

Tensor normalize(const Tensor& x, const NormLayout& L, const Tensor& gamma, const Tensor& beta, double eps) {
  if (gamma.numel() != L.channels || beta.numel() != L.channels)
    throw ShapeError("normalization: affine parameters must have " + std::to_string(L.channels) + " values");
  const auto in = x.data();
  auto xhat = std::make_shared<std::vector<double>>(in.size());
  auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(L.segments));
  std::vector<double> y(in.size());
  const auto ga = gamma.data();
  const auto be = beta.data();
  for (int64_t s = 0; s < L.segments; ++s) {
    const double* seg = in.data() + s * L.n;
    double mu = 0.0;
    for (int64_t i = 0; i < L.n; ++i) mu += seg[i];
    mu /= static_cast<double>(L.n);
    double var = 0.0;
    for (int64_t i = 0; i < L.n; ++i) var += (seg[i] - mu) * (seg[i] - mu);
    var /= static_cast<double>(L.n);
    const double r = 1.0 / std::sqrt(var + eps);
    (*rstd)[static_cast<std::size_t>(s)] = r;
    for (int64_t i = 0; i < L.n; ++i) {
      const int64_t flat = s * L.n + i;
      const auto ch = static_cast<std::size_t>((flat / L.channel_span) % L.channels);
      const double h = (seg[i] - mu) * r;
      (*xhat)[static_cast<std::size_t>(flat)] = h;
      y[static_cast<std::size_t>(flat)] = ga[ch] * h + be[ch];
    }
  }
  return record(Tensor::from(x.shape(), std::move(y)), {x, gamma, beta},
                [L, xhat, rstd, gamma](std::span<const double> g, std::span<const std::span<double>> gin) {
                  const auto ga = gamma.data();
                  std::vector<double> dh(static_cast<std::size_t>(L.n));
                  for (int64_t s = 0; s < L.segments; ++s) {
                    double sum_dh = 0.0, sum_dh_h = 0.0;
                    for (int64_t i = 0; i < L.n; ++i) {
                      const int64_t flat = s * L.n + i;
                      const auto f = static_cast<std::size_t>(flat);
                      const auto ch = static_cast<std::size_t>((flat / L.channel_span) % L.channels);
                      dh[static_cast<std::size_t>(i)] = g[f] * ga[ch];
                      sum_dh += dh[static_cast<std::size_t>(i)];
                      sum_dh_h += dh[static_cast<std::size_t>(i)] * (*xhat)[f];
                      if (!gin[1].empty()) gin[1][ch] += g[f] * (*xhat)[f];
                      if (!gin[2].empty()) gin[2][ch] += g[f];
                    }
                    if (gin[0].empty()) continue;
                    const double r = (*rstd)[static_cast<std::size_t>(s)];
                    const double inv_n = 1.0 / static_cast<double>(L.n);
                    for (int64_t i = 0; i < L.n; ++i) {
                      const auto f = static_cast<std::size_t>(s * L.n + i);
                      gin[0][f] += r * (dh[static_cast<std::size_t>(i)] - inv_n * sum_dh - (*xhat)[f] * inv_n * sum_dh_h);
                    }
                  }
                });
}

}  // namespace

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 2) throw ShapeError("group_norm: expected B×C×..., got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), C = x.dim(1);
  if (groups < 1 || C % groups != 0)
    throw ShapeError("group_norm: " + std::to_string(C) + " channels not divisible into " + std::to_string(groups) + " groups");
  const int64_t spatial = x.numel() / (B * C);
  return normalize(x, NormLayout{B * groups, (C / groups) * spatial, C, spatial}, gamma, beta, eps);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int64_t D = x.dim(-1);
  return normalize(x, NormLayout{x.numel() / D, D, D, 1}, gamma, beta, eps);
}

}  // namespace tl
