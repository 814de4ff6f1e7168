#pragma once

#include <string>
#include <vector>

#include "tl/codec.hpp"
#include "tl/dataset.hpp"

namespace tl {

struct KMeansResult {
  std::vector<double> centroids;   // k×3, row-major
  int k = 0;
  std::vector<double> objective;   // mean squared distance after each assignment step
  std::vector<std::string> warnings;
};

// Lloyd iterations from a seeded k-means++ start. points is n×dim, row-major.
// k is reduced to the number of distinct points when it exceeds it. Empty
// clusters keep their previous centroid so the objective never increases.
KMeansResult kmeans(std::span<const double> points, int dim, int k, int iterations, uint64_t seed);

// Nearest centroid per point (ties → lowest index).
std::vector<int> assign_nearest(std::span<const double> points, int dim, std::span<const double> centroids, int k);

// Per-pixel palette codec: f = 1, n_z = 3, frozen.
class PaletteTokenizer : public ImageTokenizer {
 public:
  explicit PaletteTokenizer(std::vector<double> colors);  // k×3 in [−1, 1]

  int64_t vocab_size() const override { return static_cast<int64_t>(colors_.size() / 3); }
  int factor() const override { return 1; }
  std::vector<IndexGrid> tokenize(const Tensor& x) const override;
  Tensor detokenize(std::span<const IndexGrid> grids) const override;

  const std::vector<double>& colors() const { return colors_; }

 private:
  std::vector<double> colors_;
};

// Pixels of up to max_pixels images' worth, sampled deterministically → n×3.
std::vector<double> dataset_pixels(const Dataset& data, int64_t max_pixels, uint64_t seed);

}  // namespace tl
