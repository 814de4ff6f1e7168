#include "tl/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tl/errors.hpp"

namespace tl {

std::vector<int> top_k_indices(std::span<const double> logits, int k) {
  if (k < 1) throw ConfigError("top_k must be at least 1");
  std::vector<int> idx(logits.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(kk), idx.end(), [&](int a, int b) {
    return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)] ||
           (logits[static_cast<std::size_t>(a)] == logits[static_cast<std::size_t>(b)] && a < b);
  });
  idx.resize(kk);
  return idx;
}

int sample_next(std::span<const double> logits, const SamplingParams& params, Rng& rng) {
  if (logits.empty()) throw ContractError("sample_next: no logits");
  if (!(params.temperature > 0) || !std::isfinite(params.temperature)) throw ConfigError("temperature must be positive");
  for (double l : logits)
    if (!std::isfinite(l)) throw NumericError("sample_next: non-finite logit");
  const std::vector<int> keep = top_k_indices(logits, params.top_k);
  const double top = logits[static_cast<std::size_t>(keep[0])] / params.temperature;
  std::vector<double> p(keep.size());
  double total = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    p[i] = std::exp(logits[static_cast<std::size_t>(keep[i])] / params.temperature - top);
    total += p[i];
  }
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (u < p[i]) return keep[i];
    u -= p[i];
  }
  return keep.back();
}

IndexGrid sample_grid(const Transformer& model, int64_t h, int64_t w, ScanKind order, const SamplingParams& params,
                      const Condition& cond) {
  const ScanOrder so = ScanOrder::build(order, h, w);
  const std::vector<int> prefix = condition_prefix(cond, so, model.config());
  if (static_cast<int64_t>(prefix.size()) + h * w > model.config().seq_len)
    throw ContractError("sample_grid: " + std::to_string(prefix.size()) + " prefix + " + std::to_string(h * w) +
                        " data tokens exceed the context of " + std::to_string(model.config().seq_len) +
                        "; use sliding_window_sample");
  Rng rng(params.seed);
  Transformer::Decoder dec(model);
  std::vector<double> logits;
  for (int t : prefix) logits = dec.push(t);
  std::vector<int> seq;
  for (int64_t t = 0; t < h * w; ++t) {
    seq.push_back(sample_next(logits, params, rng));
    if (t + 1 < h * w) logits = dec.push(seq.back());
  }
  return unflatten(seq, so);
}

WindowPlacement WindowPlan::at(int64_t i, int64_t j) const {
  WindowPlacement p;
  p.r0 = std::clamp<int64_t>(i - (wh / 2 - 1), 0, h - wh);
  p.c0 = std::clamp<int64_t>(j - (ww / 2 - 1), 0, w - ww);
  p.local = (i - p.r0) * ww + (j - p.c0);
  return p;
}

WindowPlan plan_windows(int64_t h, int64_t w, int64_t wh, int64_t ww) {
  if (wh < 1 || ww < 1) throw ConfigError("window must be at least 1×1");
  if (h < wh || w < ww)
    throw ContractError("plan_windows: grid " + std::to_string(h) + "×" + std::to_string(w) + " smaller than window");
  return WindowPlan{h, w, wh, ww};
}

namespace {

IndexGrid crop(const IndexGrid& g, int64_t r0, int64_t c0, int64_t hh, int64_t ww) {
  IndexGrid out(hh, ww);
  for (int64_t r = 0; r < hh; ++r)
    for (int64_t c = 0; c < ww; ++c) out.at(r, c) = g.at(r0 + r, c0 + c);
  return out;
}

}  // namespace

IndexGrid sliding_window_sample(const Transformer& model, int64_t h, int64_t w, const SamplingParams& params,
                                const SlidingOptions& opts) {
  if (opts.order != ScanKind::row_major) throw ContractError("sliding_window_sample requires row_major order");
  if (opts.cond && (opts.cond->h != h || opts.cond->w != w))
    throw ShapeError("sliding_window_sample: condition grid " + std::to_string(opts.cond->h) + "×" +
                     std::to_string(opts.cond->w) + " is not aligned with " + std::to_string(h) + "×" + std::to_string(w));
  // A grid narrower than the window shrinks the window to the grid, which is
  // exactly full-grid sampling.
  const WindowPlan plan = plan_windows(h, w, std::min(opts.window_h, h), std::min(opts.window_w, w));
  const ScanOrder local_order = ScanOrder::build(ScanKind::row_major, plan.wh, plan.ww);
  Rng rng(params.seed);
  IndexGrid out(h, w);

  // The decoder is reused while consecutive targets extend the same window.
  std::optional<Transformer::Decoder> dec;
  WindowPlacement cur{-1, -1, -1};
  std::vector<double> logits;
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const WindowPlacement p = plan.at(i, j);
      if (opts.on_step) opts.on_step(i, j, p);
      const bool extend = dec && p.r0 == cur.r0 && p.c0 == cur.c0 && p.local == cur.local + 1;
      if (extend) {
        const Cell prev = local_order.cell(cur.local);
        logits = dec->push(out.at(p.r0 + prev.row, p.c0 + prev.col));
      } else {
        Condition c;
        c.class_label = opts.class_label;
        if (opts.cond) c.spatial = crop(*opts.cond, p.r0, p.c0, plan.wh, plan.ww);
        if (opts.coords)
          c.coords = {coord_bucket(p.r0, h - plan.wh + 1, model.config().coord_buckets),
                      coord_bucket(p.c0, w - plan.ww + 1, model.config().coord_buckets)};
        const std::vector<int> prefix = condition_prefix(c, local_order, model.config());
        if (static_cast<int64_t>(prefix.size()) + plan.wh * plan.ww > model.config().seq_len)
          throw ContractError("sliding_window_sample: window plus prefix exceeds the model context");
        dec.emplace(model);
        for (int t : prefix) logits = dec->push(t);
        for (int64_t t = 0; t < p.local; ++t) {
          const Cell lc = local_order.cell(t);
          logits = dec->push(out.at(p.r0 + lc.row, p.c0 + lc.col));
        }
      }
      cur = p;
      out.at(i, j) = sample_next(logits, params, rng);
    }
  return out;
}

}  // namespace tl
