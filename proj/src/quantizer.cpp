#include "tl/quantizer.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "tl/errors.hpp"
#include "tl/kernels.hpp"
#include "tl/ops.hpp"

namespace tl {

void write_index_grid(std::ostream& out, const IndexGrid& grid, int64_t K) {
  out << grid.h << ' ' << grid.w << ' ' << K << '\n';
  for (int64_t r = 0; r < grid.h; ++r) {
    for (int64_t c = 0; c < grid.w; ++c) out << (c ? " " : "") << grid.at(r, c);
    out << '\n';
  }
}

IndexGrid read_index_grid(std::istream& in, int64_t* K) {
  int64_t h = 0, w = 0, k = 0;
  if (!(in >> h >> w >> k) || h <= 0 || w <= 0 || k <= 0) throw IoError("index grid: bad header");
  IndexGrid grid(h, w);
  for (int& v : grid.values) {
    if (!(in >> v)) throw IoError("index grid: truncated data");
    if (v < 0 || v >= k) throw IoError("index grid: value " + std::to_string(v) + " outside [0, K)");
  }
  if (K) *K = k;
  return grid;
}

Codebook::Codebook(int64_t K, int64_t n_z, Rng& rng) {
  if (K < 1 || n_z < 1) throw ContractError("codebook needs K >= 1 and n_z >= 1");
  std::vector<double> v(static_cast<std::size_t>(K * n_z));
  const double bound = 1.0 / static_cast<double>(K);
  for (double& x : v) x = rng.uniform(-bound, bound);
  entries_ = Tensor::from({K, n_z}, std::move(v), true);
}

Codebook::Codebook(Tensor entries) : entries_(std::move(entries)) {
  if (!entries_.defined() || entries_.rank() != 2) throw ContractError("codebook entries must be a K×n_z tensor");
  for (double v : entries_.data())
    if (!std::isfinite(v)) throw NumericError("codebook entries must be finite");
}

QuantizationResult quantize(const Tensor& z_hat, const Codebook& cb) {
  if (cb.size() < 1) throw ContractError("quantize: empty codebook");
  if (z_hat.rank() != 3 && z_hat.rank() != 4)
    throw ShapeError("quantize: expected h×w×n_z or B×h×w×n_z, got " + shape_str(z_hat.shape()));
  const int64_t n_z = cb.dim();
  if (z_hat.dim(-1) != n_z)
    throw ShapeError("quantize: code dim " + std::to_string(z_hat.dim(-1)) + " != codebook dim " + std::to_string(n_z));
  const int64_t B = z_hat.rank() == 4 ? z_hat.dim(0) : 1;
  const int64_t h = z_hat.dim(-3), w = z_hat.dim(-2);
  const int64_t rows = B * h * w;
  const int64_t K = cb.size();

  const auto& kt = kernels::active();
  const double* z = z_hat.data().data();
  const double* e = cb.entries().data().data();
  std::vector<int> flat(static_cast<std::size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* zr = z + r * n_z;
    for (int64_t d = 0; d < n_z; ++d)
      if (!std::isfinite(zr[d])) throw NumericError("quantize: non-finite encoder output");
    int best = 0;
    double best_d = kt.squared_distance(zr, e, n_z);
    for (int64_t k = 1; k < K; ++k) {
      const double dk = kt.squared_distance(zr, e + k * n_z, n_z);
      if (dk < best_d) {
        best_d = dk;
        best = static_cast<int>(k);
      }
    }
    flat[static_cast<std::size_t>(r)] = best;
  }

  std::vector<IndexGrid> grids;
  for (int64_t b = 0; b < B; ++b) {
    IndexGrid g(h, w);
    std::copy(flat.begin() + b * h * w, flat.begin() + (b + 1) * h * w, g.values.begin());
    grids.push_back(std::move(g));
  }
  return quantize_with(z_hat, cb, std::move(grids));
}

QuantizationResult quantize_with(const Tensor& z_hat, const Codebook& cb, std::vector<IndexGrid> indices) {
  if (z_hat.rank() != 3 && z_hat.rank() != 4)
    throw ShapeError("quantize_with: expected h×w×n_z or B×h×w×n_z, got " + shape_str(z_hat.shape()));
  const int64_t B = z_hat.rank() == 4 ? z_hat.dim(0) : 1;
  const int64_t h = z_hat.dim(-3), w = z_hat.dim(-2);
  if (static_cast<int64_t>(indices.size()) != B) throw ContractError("quantize_with: one index grid per batch element");
  std::vector<int> flat;
  flat.reserve(static_cast<std::size_t>(B * h * w));
  for (const IndexGrid& g : indices) {
    if (g.h != h || g.w != w) throw ContractError("quantize_with: index grid does not match latent size");
    for (int v : g.values)
      if (v < 0 || v >= cb.size()) throw ContractError("quantize_with: index " + std::to_string(v) + " out of range");
    flat.insert(flat.end(), g.values.begin(), g.values.end());
  }
  QuantizationResult q;
  q.indices = std::move(indices);
  q.z_q = reshape(embedding(flat, cb.entries()), z_hat.shape());
  const double inv_positions = 1.0 / static_cast<double>(flat.size());
  q.codebook_loss = scale(sum(square(sub(z_hat.detach(), q.z_q))), inv_positions);
  q.commitment_loss = scale(sum(square(sub(z_hat, q.z_q.detach()))), inv_positions);
  return q;
}

const IndexGrid& indices_of(const QuantizationResult& q, std::size_t batch_index) {
  if (batch_index >= q.indices.size()) throw ContractError("indices_of: batch index out of range");
  return q.indices[batch_index];
}

Tensor lookup(const IndexGrid& s, const Codebook& cb) {
  for (int v : s.values)
    if (v < 0 || v >= cb.size())
      throw ContractError("lookup: index " + std::to_string(v) + " outside [0, " + std::to_string(cb.size()) + ")");
  return reshape(embedding(s.values, cb.entries()), {s.h, s.w, cb.dim()});
}

Tensor lookup(std::span<const IndexGrid> grids, const Codebook& cb) {
  if (grids.empty()) throw ContractError("lookup: no grids");
  std::vector<int> flat;
  for (const IndexGrid& g : grids) {
    if (g.h != grids[0].h || g.w != grids[0].w) throw ShapeError("lookup: grids differ in shape");
    for (int v : g.values)
      if (v < 0 || v >= cb.size())
        throw ContractError("lookup: index " + std::to_string(v) + " outside [0, " + std::to_string(cb.size()) + ")");
    flat.insert(flat.end(), g.values.begin(), g.values.end());
  }
  return reshape(embedding(flat, cb.entries()),
                 {static_cast<int64_t>(grids.size()), grids[0].h, grids[0].w, cb.dim()});
}

Tensor squared_error_loss(const Tensor& x, const Tensor& x_hat) { return mean(square(sub(x, x_hat))); }

Tensor abs_error_loss(const Tensor& x, const Tensor& x_hat) { return mean(abs(sub(x, x_hat))); }

Tensor vq_loss(const Tensor& x, const Tensor& x_hat, const QuantizationResult& q, double beta,
               const RecLossFn& rec_loss) {
  if (beta < 0.0) throw ConfigError("vq_loss: beta must be >= 0");
  Tensor loss = add(rec_loss(x, x_hat), q.codebook_loss);
  if (beta > 0.0) loss = add(loss, scale(q.commitment_loss, beta));
  return loss;
}

std::vector<int64_t> code_usage(std::span<const IndexGrid> grids, int64_t K) {
  std::vector<int64_t> usage(static_cast<std::size_t>(K), 0);
  for (const IndexGrid& g : grids)
    for (int v : g.values) ++usage[static_cast<std::size_t>(v)];
  return usage;
}

int64_t reseed_unused_codes(Codebook& cb, std::span<const int64_t> usage, const Tensor& z_hat_rows, Rng& rng) {
  const int64_t n_z = cb.dim();
  if (z_hat_rows.dim(-1) != n_z) throw ShapeError("reseed_unused_codes: row width mismatch");
  const int64_t n = z_hat_rows.numel() / n_z;
  auto e = cb.entries().mutable_data();
  const auto z = z_hat_rows.data();
  int64_t replaced = 0;
  for (std::size_t k = 0; k < usage.size(); ++k) {
    if (usage[k] != 0) continue;
    const int64_t r = rng.below(n);
    std::copy(z.begin() + r * n_z, z.begin() + (r + 1) * n_z, e.begin() + static_cast<int64_t>(k) * n_z);
    ++replaced;
  }
  return replaced;
}

}  // namespace tl
