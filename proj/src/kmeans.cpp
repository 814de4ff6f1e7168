#include "tl/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "tl/errors.hpp"
#include "tl/random.hpp"

namespace tl {

namespace {

double sqdist(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double t = a[d] - b[d];
    s += t * t;
  }
  return s;
}

int64_t count_distinct(std::span<const double> points, int dim, int64_t cap) {
  std::set<std::vector<double>> seen;
  const int64_t n = static_cast<int64_t>(points.size()) / dim;
  for (int64_t i = 0; i < n && static_cast<int64_t>(seen.size()) < cap; ++i)
    seen.emplace(points.begin() + i * dim, points.begin() + (i + 1) * dim);
  return static_cast<int64_t>(seen.size());
}

}  // namespace

std::vector<int> assign_nearest(std::span<const double> points, int dim, std::span<const double> centroids, int k) {
  const int64_t n = static_cast<int64_t>(points.size()) / dim;
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double* p = points.data() + i * dim;
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = sqdist(p, centroids.data() + c * dim, dim);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

KMeansResult kmeans(std::span<const double> points, int dim, int k, int iterations, uint64_t seed) {
  if (dim < 1 || points.empty() || points.size() % static_cast<std::size_t>(dim) != 0)
    throw ContractError("kmeans: points must be a non-empty n×dim array");
  if (k < 1 || iterations < 1) throw ConfigError("kmeans: k and iterations must be positive");
  const int64_t n = static_cast<int64_t>(points.size()) / dim;
  KMeansResult r;
  const int64_t distinct = count_distinct(points, dim, k);
  if (distinct < k) {
    r.warnings.push_back("k=" + std::to_string(k) + " exceeds the " + std::to_string(distinct) +
                         " distinct points; using k=" + std::to_string(distinct));
    k = static_cast<int>(distinct);
  }
  r.k = k;

  // k-means++ seeding; a point already chosen has zero weight so centroids stay distinct.
  Rng rng(seed);
  r.centroids.assign(static_cast<std::size_t>(k * dim), 0.0);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  int64_t pick = rng.below(n);
  for (int c = 0; c < k; ++c) {
    std::copy_n(points.begin() + pick * dim, dim, r.centroids.begin() + c * dim);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sqdist(points.data() + i * dim, r.centroids.data() + c * dim, dim));
      total += d2[i];
    }
    if (c + 1 == k) break;
    double target = rng.uniform() * total;
    pick = -1;
    for (int64_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      target -= d2[i];
      if (target < 0.0) break;
    }
  }

  std::vector<double> sums(static_cast<std::size_t>(k * dim));
  std::vector<int64_t> counts(static_cast<std::size_t>(k));
  for (int it = 0; it < iterations; ++it) {
    const auto assign = assign_nearest(points, dim, r.centroids, k);
    double obj = 0.0;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int64_t i = 0; i < n; ++i) {
      const int c = assign[i];
      obj += sqdist(points.data() + i * dim, r.centroids.data() + c * dim, dim);
      for (int d = 0; d < dim; ++d) sums[c * dim + d] += points[i * dim + d];
      ++counts[c];
    }
    r.objective.push_back(obj / static_cast<double>(n));
    bool moved = false;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (int d = 0; d < dim; ++d) {
        const double v = sums[c * dim + d] / static_cast<double>(counts[c]);
        moved |= v != r.centroids[c * dim + d];
        r.centroids[c * dim + d] = v;
      }
    }
    if (!moved) break;
  }
  return r;
}

PaletteTokenizer::PaletteTokenizer(std::vector<double> colors) : colors_(std::move(colors)) {
  if (colors_.empty() || colors_.size() % 3 != 0) throw ContractError("palette needs k×3 colours");
}

std::vector<IndexGrid> PaletteTokenizer::tokenize(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("palette tokenize expects B×3×H×W");
  const int64_t B = x.dim(0), H = x.dim(2), W = x.dim(3), P = H * W;
  const auto src = x.data();
  const int k = static_cast<int>(vocab_size());
  std::vector<IndexGrid> out;
  std::vector<double> px(static_cast<std::size_t>(P * 3));
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t p = 0; p < P; ++p)
      for (int64_t ch = 0; ch < 3; ++ch) px[p * 3 + ch] = src[(b * 3 + ch) * P + p];
    IndexGrid g(H, W);
    g.values = assign_nearest(px, 3, colors_, k);
    out.push_back(std::move(g));
  }
  return out;
}

Tensor PaletteTokenizer::detokenize(std::span<const IndexGrid> grids) const {
  if (grids.empty()) throw ContractError("palette detokenize: no grids");
  const int64_t H = grids[0].h, W = grids[0].w, P = H * W;
  Tensor out = Tensor::zeros({static_cast<int64_t>(grids.size()), 3, H, W});
  auto dst = out.mutable_data();
  for (std::size_t b = 0; b < grids.size(); ++b) {
    if (grids[b].h != H || grids[b].w != W) throw ShapeError("palette detokenize: grids differ in shape");
    for (int64_t p = 0; p < P; ++p) {
      const int c = grids[b].values[p];
      if (c < 0 || c >= vocab_size()) throw ContractError("palette index out of range");
      for (int64_t ch = 0; ch < 3; ++ch)
        dst[(static_cast<int64_t>(b) * 3 + ch) * P + p] = colors_[c * 3 + ch];
    }
  }
  return out;
}

std::vector<double> dataset_pixels(const Dataset& data, int64_t max_pixels, uint64_t seed) {
  std::vector<double> all;
  for (int64_t i = 0; i < data.size(); ++i) {
    const auto img = data[i].image.data();
    const int64_t P = data[i].image.dim(1) * data[i].image.dim(2);
    for (int64_t p = 0; p < P; ++p)
      for (int64_t ch = 0; ch < 3; ++ch) all.push_back(img[ch * P + p]);
  }
  const int64_t n = static_cast<int64_t>(all.size()) / 3;
  if (max_pixels <= 0 || n <= max_pixels) return all;
  std::vector<int64_t> idx(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<int64_t>(idx));
  idx.resize(static_cast<std::size_t>(max_pixels));
  std::sort(idx.begin(), idx.end());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(max_pixels * 3));
  for (int64_t i : idx) out.insert(out.end(), all.begin() + i * 3, all.begin() + i * 3 + 3);
  return out;
}

}  // namespace tl
