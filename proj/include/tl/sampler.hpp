#pragma once

#include <functional>
#include <optional>
#include <span>

#include "tl/transformer.hpp"

namespace tl {

struct SamplingParams {
  double temperature = 1.0;
  int top_k = 100;  // clamped to the vocabulary size
  uint64_t seed = 0;
};

// Temperature, then the top_k largest logits (ties → lower index), softmax,
// categorical draw.
int sample_next(std::span<const double> logits, const SamplingParams& params, Rng& rng);

// Indices of the k largest logits, largest first, ties by lower index.
std::vector<int> top_k_indices(std::span<const double> logits, int k);

// Whole grid in one context. Requires prefix + h·w ≤ seq_len.
IndexGrid sample_grid(const Transformer& model, int64_t h, int64_t w, ScanKind order, const SamplingParams& params,
                      const Condition& cond = {});

struct WindowPlacement {
  int64_t r0 = 0, c0 = 0;
  int64_t local = 0;  // (i − r0)·ww + (j − c0)
};

// Target-centred window placement over an h×w grid generated in row-major order.
struct WindowPlan {
  int64_t h = 0, w = 0, wh = 16, ww = 16;

  WindowPlacement at(int64_t i, int64_t j) const;
};

WindowPlan plan_windows(int64_t h, int64_t w, int64_t wh = 16, int64_t ww = 16);

struct SlidingOptions {
  int64_t window_h = 16;
  int64_t window_w = 16;
  ScanKind order = ScanKind::row_major;
  std::optional<IndexGrid> cond;  // spatial condition aligned 1:1 with the grid
  std::optional<int> class_label;
  bool coords = false;
  // Observes each sampling step (target row, col, placement).
  std::function<void(int64_t, int64_t, const WindowPlacement&)> on_step;
};

// Generates an h×w grid (possibly larger than the context) window by window.
// When the window covers the grid this reproduces sample_grid bit-exactly.
IndexGrid sliding_window_sample(const Transformer& model, int64_t h, int64_t w, const SamplingParams& params,
                                const SlidingOptions& opts = {});

}  // namespace tl
