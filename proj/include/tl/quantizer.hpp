#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "tl/random.hpp"
#include "tl/tensor.hpp"

namespace tl {

// h×w grid of codebook indices, row-major.
struct IndexGrid {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<int> values;

  IndexGrid() = default;
  IndexGrid(int64_t rows, int64_t cols, int fill = 0)
      : h(rows), w(cols), values(static_cast<std::size_t>(rows * cols), fill) {}

  int at(int64_t r, int64_t c) const { return values[static_cast<std::size_t>(r * w + c)]; }
  int& at(int64_t r, int64_t c) { return values[static_cast<std::size_t>(r * w + c)]; }
  int64_t size() const { return h * w; }
  bool operator==(const IndexGrid&) const = default;
};

// Text form: header "h w K", then one row per line of space-separated ints.
void write_index_grid(std::ostream& out, const IndexGrid& grid, int64_t K);
IndexGrid read_index_grid(std::istream& in, int64_t* K = nullptr);

class Codebook {
 public:
  // Entries drawn from U(−1/K, 1/K).
  Codebook(int64_t K, int64_t n_z, Rng& rng);
  explicit Codebook(Tensor entries);

  int64_t size() const { return entries_.dim(0); }
  int64_t dim() const { return entries_.dim(1); }
  const Tensor& entries() const { return entries_; }
  Tensor& entries() { return entries_; }

 private:
  Tensor entries_;  // K×n_z, trainable
};

struct QuantizationResult {
  Tensor z_q;                       // shape of z_hat; gathered from the codebook
  std::vector<IndexGrid> indices;   // one grid per batch element
  Tensor codebook_loss;             // mean over positions of ‖sg[ẑ] − z_q‖²
  Tensor commitment_loss;           // mean over positions of ‖ẑ − sg[z_q]‖²
};

// Nearest codebook entry per spatial vector (ties → lowest index). z_hat is
// h×w×n_z or B×h×w×n_z.
QuantizationResult quantize(const Tensor& z_hat, const Codebook& cb);
// Same result assembly with the assignment given rather than searched.
QuantizationResult quantize_with(const Tensor& z_hat, const Codebook& cb, std::vector<IndexGrid> indices);

const IndexGrid& indices_of(const QuantizationResult& q, std::size_t batch_index = 0);

// Codebook gather → h×w×n_z; differentiable w.r.t. the entries.
Tensor lookup(const IndexGrid& s, const Codebook& cb);
// Batched gather → B×h×w×n_z.
Tensor lookup(std::span<const IndexGrid> grids, const Codebook& cb);

using RecLossFn = std::function<Tensor(const Tensor& x, const Tensor& x_hat)>;
Tensor squared_error_loss(const Tensor& x, const Tensor& x_hat);
Tensor abs_error_loss(const Tensor& x, const Tensor& x_hat);

// rec_loss(x, x̂) + codebook_loss + β·commitment_loss.
Tensor vq_loss(const Tensor& x, const Tensor& x_hat, const QuantizationResult& q, double beta,
               const RecLossFn& rec_loss);

// Per-code hit counts over a set of grids.
std::vector<int64_t> code_usage(std::span<const IndexGrid> grids, int64_t K);

// Replaces entries with zero usage by randomly chosen rows of z_hat_rows
// (n×n_z). Returns the number of entries replaced.
int64_t reseed_unused_codes(Codebook& cb, std::span<const int64_t> usage, const Tensor& z_hat_rows, Rng& rng);

}  // namespace tl
