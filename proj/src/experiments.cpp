#include "tl/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "tl/errors.hpp"
#include "tl/kmeans.hpp"
#include "tl/metrics.hpp"
#include "tl/sampler.hpp"

namespace tl {

namespace fs = std::filesystem;

namespace {

bool g_quiet = false;

std::string hex(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t fnv(uint64_t h, const std::string& s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fixed(double v, int digits = 4) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Consecutive batches over seeded epoch permutations.
class BatchStream {
 public:
  BatchStream(int64_t n, int64_t batch, uint64_t seed, const Dataset* data = nullptr)
      : n_(n), batch_(std::min(batch, n)), seed_(seed), data_(data) {}

  std::vector<int64_t> next() {
    std::vector<int64_t> out;
    while (static_cast<int64_t>(out.size()) < batch_) {
      if (pos_ >= static_cast<int64_t>(order_.size())) {
        order_ = data_ ? data_->order(seed_, epoch_) : permutation();
        ++epoch_;
        pos_ = 0;
      }
      out.push_back(order_[static_cast<std::size_t>(pos_++)]);
    }
    return out;
  }

 private:
  std::vector<int64_t> permutation() {
    std::vector<int64_t> p(static_cast<std::size_t>(n_));
    std::iota(p.begin(), p.end(), 0);
    Rng rng(seed_ ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch_ + 1)));
    rng.shuffle(std::span<int64_t>(p));
    return p;
  }

  int64_t n_, batch_;
  uint64_t seed_;
  const Dataset* data_;
  std::vector<int64_t> order_;
  int64_t epoch_ = 0, pos_ = 0;
};

std::vector<int64_t> first_n(int64_t n) {
  std::vector<int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

Tensor images_of(const Dataset& data, std::span<const int64_t> idx, bool cond_maps) {
  return cond_maps ? data.cond_batch(idx) : data.batch(idx);
}

std::vector<IndexGrid> tokenize_all(const ImageTokenizer& tok, const Dataset& data, bool cond_maps) {
  autograd::NoGradGuard ng;
  std::vector<IndexGrid> out;
  for (int64_t i = 0; i < data.size(); i += 16) {
    auto idx = first_n(std::min<int64_t>(16, data.size() - i));
    for (auto& v : idx) v += i;
    for (auto& g : tok.tokenize(images_of(data, idx, cond_maps))) out.push_back(std::move(g));
  }
  return out;
}

double usage_fraction(std::span<const IndexGrid> grids, int64_t K) {
  const auto u = code_usage(grids, K);
  return static_cast<double>(std::count_if(u.begin(), u.end(), [](int64_t c) { return c > 0; })) /
         static_cast<double>(K);
}

double reconstruction_mse(const ImageTokenizer& tok, const Dataset& data, int64_t n, bool cond_maps = false) {
  autograd::NoGradGuard ng;
  const auto idx = first_n(std::min(n, data.size()));
  const Tensor x = images_of(data, idx, cond_maps);
  const auto grids = tok.tokenize(x);
  return squared_error_loss(x, tok.detokenize(grids)).item();
}

void save_image(const fs::path& path, const Tensor& img) { write_png(path, tensor_to_image(img)); }

Tensor batch_item(const Tensor& x, int64_t i) {
  Shape s = x.shape();
  const int64_t n = x.numel() / s[0];
  s[0] = 1;
  const auto d = x.data().subspan(static_cast<std::size_t>(i * n), static_cast<std::size_t>(n));
  return Tensor::from(s, std::vector<double>(d.begin(), d.end()));
}

std::string data_key(const ExperimentConfig& cfg) {
  return cfg.run.dataset + "|" + std::to_string(cfg.run.image_size) + "|" + std::to_string(cfg.run.max_images) + "|" +
         std::to_string(cfg.run.data_seed);
}

std::unique_ptr<ImageTokenizer> require_tokenizer(const std::optional<fs::path>& path, const std::string& key) {
  if (!path) throw ConfigError(key + " is required for this command");
  if (!fs::exists(*path)) throw ConfigError(key + " points to a missing file: " + path->string());
  return load_tokenizer(*path);
}

}  // namespace

void set_quiet(bool quiet) { g_quiet = quiet; }

void log_info(const std::string& msg) {
  if (!g_quiet) std::cerr << msg << '\n';
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  const auto& r = cfg.run;
  const bool need_cond = r.train_on_cond || cfg.transformer.conditioning == Conditioning::spatial;
  Dataset d;
  if (r.dataset.rfind("synthetic:", 0) == 0) {
    int64_t n = 0;
    try {
      n = std::stoll(r.dataset.substr(10));
    } catch (const std::exception&) {
      throw ConfigError("run.dataset: expected synthetic:N, got " + r.dataset);
    }
    if (n < 1) throw ConfigError("run.dataset: synthetic count must be positive");
    d = shapes_dataset(n, r.image_size, r.data_seed, true);
  } else {
    if (!fs::is_directory(r.dataset)) throw ConfigError("run.dataset is not a directory: " + r.dataset);
    DatasetOptions opts;
    opts.size = r.image_size;
    opts.cond_dir = r.cond_dir;
    if (need_cond && !opts.cond_dir) throw ConfigError("run.cond_dir is required for condition maps");
    IngestReport rep;
    d = Dataset::ingest(r.dataset, opts, &rep);
    for (const auto& w : rep.warnings) log_info("warning: " + w);
    if (rep.skipped) log_info("skipped " + std::to_string(rep.skipped) + " unreadable files");
  }
  if (r.max_images > 0 && d.size() > r.max_images) {
    std::vector<Sample> keep;
    for (int64_t i = 0; i < r.max_images; ++i) keep.push_back(d[i]);
    d = Dataset(std::move(keep));
  }
  if (need_cond && !d.has_cond()) throw ConfigError("dataset has no condition maps");
  return d;
}

fs::path prepare_out_dir(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.run.out_dir);
  cfg.raw.save(cfg.run.out_dir / "config.ini");
  return cfg.run.out_dir;
}

VqganResult train_vqgan(const ExperimentConfig& cfg) {
  const fs::path out = prepare_out_dir(cfg);
  const Dataset data = load_dataset(cfg);
  const bool on_cond = cfg.run.train_on_cond;
  CodecConfig cc = cfg.codec;
  cc.image_size = static_cast<int>(cfg.run.image_size);
  Codec codec(cc);
  PatchDiscriminator disc(cfg.disc);
  GanTrainer trainer(codec, disc, cfg.gan);
  trainer.warn = [](const std::string& m) { log_info("warning: " + m); };

  MetricsLog metrics(out / "metrics.csv", {"g_loss", "d_loss", "lambda", "rec_loss", "vq_terms", "disc_active"});
  MetricsLog evals(out / "eval.csv", {"rec_mse", "usage"});
  TimingLog timing(out / "timing.csv");
  VqganResult res;
  res.codec_checkpoint = out / "codec.ckpt";
  res.disc_checkpoint = out / "disc.ckpt";

  BatchStream stream(data.size(), cfg.run.batch_size, cfg.run.seed, &data);
  Rng reseed_rng(cfg.run.seed ^ 0x7265736565640000ull);
  auto evaluate = [&](int64_t step) {
    res.final_mse = reconstruction_mse(codec, data, 64, on_cond);
    res.usage = usage_fraction(tokenize_all(codec, data, on_cond), cc.K);
    evals.append(step, {res.final_mse, res.usage});
  };
  auto save = [&](int64_t step) {
    save_codec(res.codec_checkpoint, codec, step, &trainer.g_opt());
    save_discriminator(res.disc_checkpoint, disc, step, &trainer.d_opt());
  };

  int64_t last_saved = -1;
  for (int64_t step = 1; step <= cfg.run.steps; ++step) {
    const auto idx = stream.next();
    const Tensor x = images_of(data, idx, on_cond);
    const GanStepReport rep = trainer.step(x);
    if (!std::isfinite(rep.g_loss) || !std::isfinite(rep.d_loss)) {
      const std::string kept = last_saved < 0 ? "no checkpoint was written" : "checkpoint from step " + std::to_string(last_saved) + " kept";
      throw NumericError("non-finite loss at step " + std::to_string(step) + "; " + kept);
    }
    if (cfg.reseed_every > 0 && step % cfg.reseed_every == 0) {
      autograd::NoGradGuard ng;
      const Reconstruction r = codec.reconstruct(x);
      const Tensor rows = reshape(r.z_hat, {r.z_hat.numel() / cc.n_z, cc.n_z});
      const auto usage = code_usage(r.q.indices, cc.K);
      const int64_t n = reseed_unused_codes(codec.codebook(), usage, rows, reseed_rng);
      if (n) log_info("step " + std::to_string(step) + ": reseeded " + std::to_string(n) + " unused codes");
    }
    if (step % cfg.run.log_every == 0 || step == cfg.run.steps) {
      metrics.append(step, {rep.g_loss, rep.d_loss, rep.lambda, rep.rec_loss, rep.vq_terms, rep.disc_active ? 1.0 : 0.0});
      timing.mark(step, "train", static_cast<double>(cfg.run.log_every));
      log_info("vqgan step " + std::to_string(step) + " g " + fixed(rep.g_loss) + " d " + fixed(rep.d_loss) +
               " rec " + fixed(rep.rec_loss));
    }
    if (step % cfg.run.eval_every == 0) evaluate(step);
    if (step % cfg.run.checkpoint_every == 0) {
      save(step);
      last_saved = step;
    }
  }
  if (cfg.run.steps % cfg.run.eval_every != 0 || cfg.run.steps == 0) evaluate(cfg.run.steps);
  save(cfg.run.steps);
  res.steps = cfg.run.steps;
  {
    autograd::NoGradGuard ng;
    const auto idx = first_n(std::min<int64_t>(4, data.size()));
    const Tensor xr = codec.reconstruct(images_of(data, idx, on_cond)).x_hat;
    for (std::size_t i = 0; i < idx.size(); ++i)
      save_image(out / ("recon_" + std::to_string(i) + ".png"), batch_item(xr, static_cast<int64_t>(i)));
  }
  log_info("vqgan done: mse " + fixed(res.final_mse, 5) + " usage " + fixed(res.usage, 3));
  return res;
}

fs::path grid_cache_path(const fs::path& cache_dir, uint64_t checkpoint_hash, const std::string& key, bool cond_maps) {
  uint64_t h = fnv(0xcbf29ce484222325ull, key + (cond_maps ? "|cond" : "|data"));
  h = fnv(h, hex(checkpoint_hash));
  return cache_dir / ("grids_" + hex(h) + ".txt");
}

std::vector<IndexGrid> encode_cached(const ImageTokenizer& tok, const fs::path& checkpoint, const Dataset& data,
                                     bool cond_maps, const fs::path& cache_dir, const std::string& key,
                                     bool* cache_hit) {
  const fs::path path = grid_cache_path(cache_dir, file_hash(checkpoint), key, cond_maps);
  if (cache_hit) *cache_hit = false;
  if (fs::exists(path)) {
    std::ifstream in(path);
    int64_t n = 0;
    in >> n;
    std::vector<IndexGrid> grids;
    for (int64_t i = 0; i < n && in; ++i) grids.push_back(read_index_grid(in));
    if (static_cast<int64_t>(grids.size()) == data.size()) {
      if (cache_hit) *cache_hit = true;
      return grids;
    }
  }
  auto grids = tokenize_all(tok, data, cond_maps);
  fs::create_directories(cache_dir);
  std::ofstream out(path.string() + ".tmp");
  out << grids.size() << '\n';
  for (const auto& g : grids) write_index_grid(out, g, tok.vocab_size());
  out.close();
  fs::rename(path.string() + ".tmp", path);
  return grids;
}

TransformerConfig resolve_transformer_config(const EncodedData& data, const TransformerSettings& s) {
  if (data.grids.empty()) throw ContractError("no encoded grids");
  TransformerConfig t = s.model;
  if (s.explicit_K && t.K != data.K)
    throw ConfigError("transformer.K = " + std::to_string(t.K) + " does not match the tokenizer vocabulary " +
                      std::to_string(data.K));
  t.K = static_cast<int>(data.K);
  t.cond_vocab = s.conditioning == Conditioning::spatial ? static_cast<int>(data.cond_K) : 0;
  t.num_classes = s.conditioning == Conditioning::klass ? data.num_classes : 0;
  const int64_t h = std::min(data.grids[0].h, s.window), w = std::min(data.grids[0].w, s.window);
  int64_t prefix = (s.coords ? 2 : 0) + (t.cond_vocab ? h * w : 0) + (t.num_classes ? 1 : 0);
  if (prefix == 0) prefix = 1;
  const int64_t need = prefix + h * w;
  if (!s.explicit_seq_len) t.seq_len = static_cast<int>(need);
  else if (t.seq_len < need)
    throw ConfigError("transformer.seq_len = " + std::to_string(t.seq_len) + " is shorter than the " +
                      std::to_string(need) + " tokens one training window needs");
  t.validate();
  return t;
}

namespace {

// One training/eval window of grid i at (r0, c0).
TokenSequence window_sequence(const EncodedData& data, std::size_t i, std::size_t cond_i, int64_t r0, int64_t c0,
                              int64_t wh, int64_t ww, const ScanOrder& order, const TransformerSettings& s,
                              const TransformerConfig& tc) {
  auto crop = [&](const IndexGrid& g) {
    if (g.h == wh && g.w == ww) return g;
    IndexGrid out(wh, ww);
    for (int64_t r = 0; r < wh; ++r)
      for (int64_t c = 0; c < ww; ++c) out.at(r, c) = g.at(r0 + r, c0 + c);
    return out;
  };
  Condition cond;
  if (tc.num_classes) cond.class_label = data.labels.at(cond_i);
  if (tc.cond_vocab) cond.spatial = crop(data.cond.at(cond_i));
  if (s.coords) {
    const auto& g = data.grids[i];
    cond.coords = {coord_bucket(r0, g.h - wh + 1, tc.coord_buckets), coord_bucket(c0, g.w - ww + 1, tc.coord_buckets)};
  }
  return make_sequence(cond, crop(data.grids[i]), order, tc);
}

}  // namespace

FitResult fit_transformer(const EncodedData& data, const FitOptions& opt) {
  const TransformerSettings& s = opt.settings;
  const TransformerConfig tc = resolve_transformer_config(data, s);
  if (tc.num_classes && data.labels.size() != data.grids.size()) throw ConfigError("class conditioning needs labels");
  if (tc.cond_vocab && data.cond.size() != data.grids.size()) throw ConfigError("spatial conditioning needs condition grids");
  if (tc.cond_vocab && (data.cond[0].h != data.grids[0].h || data.cond[0].w != data.grids[0].w))
    throw ShapeError("condition grid " + std::to_string(data.cond[0].h) + "×" + std::to_string(data.cond[0].w) +
                     " does not match data grid " + std::to_string(data.grids[0].h) + "×" +
                     std::to_string(data.grids[0].w) + "; both codecs need the same factor");

  FitResult res;
  res.model = std::make_unique<Transformer>(tc);
  Transformer& model = *res.model;
  Adam adam(model.params(), opt.adam);
  const int64_t H = data.grids[0].h, W = data.grids[0].w;
  const int64_t wh = std::min(H, s.window), ww = std::min(W, s.window);
  const ScanOrder order = ScanOrder::build(s.order, wh, ww);
  const int64_t N = static_cast<int64_t>(data.grids.size());
  const int64_t n_train = N - s.holdout;
  if (n_train < 1)
    throw ConfigError("transformer.holdout = " + std::to_string(s.holdout) + " leaves no training grids out of " +
                      std::to_string(N));

  std::vector<std::size_t> pairing(static_cast<std::size_t>(N));
  std::iota(pairing.begin(), pairing.end(), 0);
  if (s.shuffle_pairing) {
    Rng prng(opt.seed ^ 0x7061697273ull);
    prng.shuffle(std::span<std::size_t>(pairing));
  }

  std::vector<TokenSequence> eval_set;
  const int64_t eval_begin = s.holdout ? n_train : 0, eval_end = s.holdout ? N : std::min(N, s.eval_images);
  for (int64_t i = eval_begin; i < eval_end; ++i)
    eval_set.push_back(window_sequence(data, static_cast<std::size_t>(i), pairing[static_cast<std::size_t>(i)], 0, 0,
                                       wh, ww, order, s, tc));
  auto evaluate = [&](int64_t step, MetricsLog& log) {
    autograd::NoGradGuard ng;
    const double nll = model.nll(eval_set).item();
    res.eval_curve.emplace_back(step, nll);
    log.append(step, {nll});
    return nll;
  };

  fs::create_directories(opt.out_dir);
  MetricsLog metrics(opt.out_dir / (opt.tag + "metrics.csv"), {"nll"});
  MetricsLog evals(opt.out_dir / (opt.tag + "eval.csv"), {"eval_nll"});
  TimingLog timing(opt.out_dir / (opt.tag + "timing.csv"));
  evaluate(0, evals);
  log_info(opt.tag + "step 0 eval nll " + fixed(res.eval_curve.back().second));

  BatchStream stream(n_train, opt.batch_size, opt.seed);
  Rng crop_rng(opt.seed ^ 0x63726f70ull);
  Rng drop_rng(opt.seed ^ 0x64726f70ull);
  const double tokens_per_step = static_cast<double>(std::min(opt.batch_size, n_train) * wh * ww);
  for (int64_t step = 1; step <= opt.steps; ++step) {
    std::vector<TokenSequence> batch;
    for (int64_t i : stream.next()) {
      const int64_t r0 = H > wh ? crop_rng.below(H - wh + 1) : 0;
      const int64_t c0 = W > ww ? crop_rng.below(W - ww + 1) : 0;
      batch.push_back(window_sequence(data, static_cast<std::size_t>(i), pairing[static_cast<std::size_t>(i)], r0, c0,
                                      wh, ww, order, s, tc));
    }
    adam.zero_grad();
    const Tensor loss = model.nll(batch, tc.dropout > 0 ? &drop_rng : nullptr);
    const double l = loss.item();
    if (!std::isfinite(l)) throw NumericError("non-finite transformer loss at step " + std::to_string(step));
    autograd::backward(loss);
    adam.step();
    if (step % opt.log_every == 0 || step == opt.steps) {
      metrics.append(step, {l});
      timing.mark(step, "train", tokens_per_step * static_cast<double>(opt.log_every));
    }
    if (step % opt.eval_every == 0 || step == opt.steps) {
      const double e = evaluate(step, evals);
      log_info(opt.tag + "step " + std::to_string(step) + " nll " + fixed(l) + " eval " + fixed(e));
    }
  }
  if (opt.save) {
    Config meta = opt.meta;
    meta.set("data.scan_order", std::string(scan_kind_name(s.order)));
    meta.set("data.conditioning", s.conditioning == Conditioning::none    ? "none"
                                  : s.conditioning == Conditioning::klass ? "class"
                                                                          : "spatial");
    meta.set("data.coords", s.coords ? "true" : "false");
    meta.set("data.window_h", std::to_string(wh));
    meta.set("data.window_w", std::to_string(ww));
    meta.set("data.grid_h", std::to_string(H));
    meta.set("data.grid_w", std::to_string(W));
    res.checkpoint = opt.out_dir / (opt.tag + "transformer.ckpt");
    save_transformer(res.checkpoint, model, meta, opt.steps, &adam);
  }
  return res;
}

namespace {

EncodedData encode_for(const ExperimentConfig& cfg, const Dataset& data, const ImageTokenizer& tok,
                       const fs::path& tok_path, const fs::path& cache_dir) {
  EncodedData enc;
  enc.K = tok.vocab_size();
  bool hit = false;
  enc.grids = encode_cached(tok, tok_path, data, false, cache_dir, data_key(cfg), &hit);
  log_info(std::string(hit ? "loaded cached" : "encoded") + " " + std::to_string(enc.grids.size()) + " grids");
  const auto cond = cfg.transformer.conditioning;
  if (cond == Conditioning::spatial) {
    const auto cond_tok = require_tokenizer(cfg.checkpoints.cond_codec, "checkpoints.cond_codec");
    if (cond_tok->factor() != tok.factor())
      throw ConfigError("condition codec factor " + std::to_string(cond_tok->factor()) + " differs from data factor " +
                        std::to_string(tok.factor()));
    enc.cond_K = cond_tok->vocab_size();
    enc.cond = encode_cached(*cond_tok, *cfg.checkpoints.cond_codec, data, true, cache_dir, data_key(cfg));
  }
  if (cond == Conditioning::klass) {
    if (!data.has_labels()) throw ConfigError("class conditioning needs labels");
    enc.num_classes = data.num_classes();
    for (int64_t i = 0; i < data.size(); ++i) enc.labels.push_back(*data[i].label);
  }
  return enc;
}

FitOptions fit_options(const ExperimentConfig& cfg, const fs::path& out_dir, int64_t steps) {
  FitOptions o;
  o.settings = cfg.transformer;
  o.adam = cfg.transformer_adam;
  o.steps = steps;
  o.batch_size = cfg.run.batch_size;
  o.eval_every = cfg.run.eval_every;
  o.log_every = cfg.run.log_every;
  o.seed = cfg.run.seed;
  o.out_dir = out_dir;
  return o;
}

}  // namespace

TransformerRunResult train_transformer(const ExperimentConfig& cfg) {
  const fs::path out = prepare_out_dir(cfg);
  const auto tok = require_tokenizer(cfg.checkpoints.codec, "checkpoints.codec");
  const Dataset data = load_dataset(cfg);
  const EncodedData enc = encode_for(cfg, data, *tok, *cfg.checkpoints.codec, out / "cache");
  FitOptions o = fit_options(cfg, out, cfg.run.steps);
  o.meta.set("data.codec", fs::absolute(*cfg.checkpoints.codec).string());
  o.meta.set("data.codec_hash", hex(file_hash(*cfg.checkpoints.codec)));
  if (cfg.checkpoints.cond_codec) o.meta.set("data.cond_codec", fs::absolute(*cfg.checkpoints.cond_codec).string());
  const FitResult fit = fit_transformer(enc, o);
  return {fit.checkpoint, fit.eval_curve.front().second, fit.eval_curve.back().second};
}

std::vector<IndexGrid> sample_images(const ExperimentConfig& cfg, const fs::path& out_dir) {
  if (!cfg.checkpoints.transformer) throw ConfigError("checkpoints.transformer is required for sampling");
  if (!fs::exists(*cfg.checkpoints.transformer))
    throw ConfigError("checkpoints.transformer points to a missing file: " + cfg.checkpoints.transformer->string());
  Config meta;
  const auto model = load_transformer(*cfg.checkpoints.transformer, &meta);
  const TransformerConfig& tc = model->config();
  std::optional<fs::path> codec_path = cfg.checkpoints.codec;
  if (!codec_path && meta.has("data.codec")) codec_path = meta.get("data.codec", "");
  const auto tok = require_tokenizer(codec_path, "checkpoints.codec");
  if (tok->vocab_size() != tc.K)
    throw ConfigError("codec vocabulary " + std::to_string(tok->vocab_size()) + " does not match transformer K " +
                      std::to_string(tc.K));

  const ScanKind trained_order = parse_scan_kind(meta.get("data.scan_order", "row_major"));
  const ScanKind order = cfg.sample.order.value_or(trained_order);
  const int64_t wh = meta.get_int64("data.window_h", 16), ww = meta.get_int64("data.window_w", 16);
  auto cells = [&](int64_t v, const char* what) {
    if (!cfg.sample.in_pixels) return v;
    if (v % tok->factor() != 0)
      throw ConfigError(std::string("sample ") + what + " of " + std::to_string(v) + " px is not a multiple of f = " +
                        std::to_string(tok->factor()));
    return v / tok->factor();
  };
  const int64_t h = cfg.sample.height > 0 ? cells(cfg.sample.height, "height") : meta.get_int64("data.grid_h", 16);
  const int64_t w = cfg.sample.width > 0 ? cells(cfg.sample.width, "width") : meta.get_int64("data.grid_w", 16);
  const bool coords = cfg.sample.coords && meta.get_bool("data.coords", false);
  if (cfg.sample.coords && !coords) log_info("warning: model was trained without coordinates; --coords ignored");

  std::vector<IndexGrid> cond_grids;
  if (tc.cond_vocab) {
    std::optional<fs::path> cpath = cfg.checkpoints.cond_codec;
    if (!cpath && meta.has("data.cond_codec")) cpath = meta.get("data.cond_codec", "");
    const auto ctok = require_tokenizer(cpath, "checkpoints.cond_codec");
    ExperimentConfig dcfg = cfg;
    dcfg.transformer.conditioning = Conditioning::spatial;
    const Dataset data = load_dataset(dcfg);
    cond_grids = tokenize_all(*ctok, data, true);
  }

  fs::create_directories(out_dir);
  std::vector<IndexGrid> out;
  for (int64_t n = 0; n < cfg.sample.count; ++n) {
    SamplingParams p = cfg.sample.params;
    p.seed = cfg.sample.params.seed + static_cast<uint64_t>(n);
    std::optional<int> label;
    if (tc.num_classes) label = static_cast<int>(n % tc.num_classes);
    std::optional<IndexGrid> cond;
    if (!cond_grids.empty()) {
      cond = cond_grids[static_cast<std::size_t>(n) % cond_grids.size()];
      if (cond->h != h || cond->w != w)
        throw ShapeError("condition grid " + std::to_string(cond->h) + "×" + std::to_string(cond->w) +
                         " does not match the requested " + std::to_string(h) + "×" + std::to_string(w));
    }
    IndexGrid g;
    const bool fits = h <= wh && w <= ww;
    if (fits && !coords) {
      Condition c;
      c.class_label = label;
      c.spatial = cond;
      g = sample_grid(*model, h, w, order, p, c);
    } else {
      SlidingOptions so;
      so.window_h = std::min(wh, h);
      so.window_w = std::min(ww, w);
      so.order = order;
      so.cond = cond;
      so.class_label = label;
      so.coords = coords;
      g = sliding_window_sample(*model, h, w, p, so);
    }
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03lld", static_cast<long long>(n));
    {
      std::ofstream gt(out_dir / (std::string(name) + ".grid.txt"));
      write_index_grid(gt, g, tc.K);
    }
    {
      autograd::NoGradGuard ng;
      save_image(out_dir / (std::string(name) + ".png"), tok->detokenize(std::span(&g, 1)));
    }
    log_info("wrote " + (out_dir / name).string());
    out.push_back(std::move(g));
  }
  return out;
}

double reconstruct_images(const ExperimentConfig& cfg, const fs::path& in_dir, const fs::path& out_dir) {
  const auto tok = require_tokenizer(cfg.checkpoints.codec, "checkpoints.codec");
  DatasetOptions opts;
  opts.size = cfg.run.image_size;
  IngestReport rep;
  const Dataset data = Dataset::ingest(in_dir, opts, &rep);
  for (const auto& w : rep.warnings) log_info("warning: " + w);
  fs::create_directories(out_dir);
  Report report{"Reconstructions", {"image", "mse"}, {}, {}};
  double total = 0;
  autograd::NoGradGuard ng;
  for (int64_t i = 0; i < data.size(); ++i) {
    const std::vector<int64_t> idx{i};
    const Tensor x = data.batch(idx);
    const Tensor xr = tok->detokenize(tok->tokenize(x));
    const double mse = squared_error_loss(x, xr).item();
    total += mse;
    const std::string stem = fs::path(data[i].name).stem().string();
    save_image(out_dir / (stem + "_recon.png"), xr);
    report.add_row({data[i].name, format_double(mse)});
  }
  const double mean_mse = total / static_cast<double>(data.size());
  report.notes.push_back("Mean MSE (pixels in [-1, 1]): " + format_double(mean_mse));
  report.write_csv(out_dir / "reconstruct.csv");
  report.write_markdown(out_dir / "reconstruct.md");
  return mean_mse;
}

KMeansBaselineResult kmeans_baseline(const ExperimentConfig& cfg) {
  const fs::path out = prepare_out_dir(cfg);
  const Dataset data = load_dataset(cfg);
  const auto pts = dataset_pixels(data, cfg.kmeans.max_pixels, cfg.run.seed);
  const KMeansResult km = kmeans(pts, 3, cfg.kmeans.k, cfg.kmeans.iterations, cfg.run.seed);
  for (const auto& w : km.warnings) log_info("warning: " + w);
  const PaletteTokenizer palette(km.centroids);
  KMeansBaselineResult res;
  res.k = km.k;
  res.objective = km.objective;
  res.checkpoint = out / "palette.ckpt";
  save_palette(res.checkpoint, palette);
  MetricsLog log(out / "kmeans.csv", {"objective"});
  for (std::size_t i = 0; i < km.objective.size(); ++i) log.append(static_cast<int64_t>(i + 1), {km.objective[i]});
  res.quantization_mse = reconstruction_mse(palette, data, 64);
  log_info("kmeans k=" + std::to_string(km.k) + " quantization mse " + fixed(res.quantization_mse, 5));
  return res;
}

namespace {

ExperimentConfig sub_config(const ExperimentConfig& cfg, const fs::path& out_dir, int64_t steps) {
  ExperimentConfig c = cfg;
  c.run.out_dir = out_dir;
  c.run.steps = steps;
  c.run.checkpoint_every = std::max<int64_t>(steps, 1);
  return c;
}

// A codec checkpoint: the configured one, or a fresh fixed-budget run.
fs::path obtain_codec(const ExperimentConfig& cfg, const fs::path& dir) {
  if (cfg.checkpoints.codec) {
    if (!fs::exists(*cfg.checkpoints.codec))
      throw ConfigError("checkpoints.codec points to a missing file: " + cfg.checkpoints.codec->string());
    return *cfg.checkpoints.codec;
  }
  return train_vqgan(sub_config(cfg, dir, cfg.study.codec_steps)).codec_checkpoint;
}

}  // namespace

std::vector<FStudyRow> f_study(const ExperimentConfig& cfg) {
  const fs::path out = prepare_out_dir(cfg);
  const Dataset data = load_dataset(cfg);
  std::vector<FStudyRow> rows;
  Report report{"Downsampling factor study", {"m", "f", "seq_len", "rec_error", "nll"}, {}, {}};
  for (int m : cfg.study.f_m_values) {
    const fs::path dir = out / ("m" + std::to_string(m));
    ExperimentConfig c = sub_config(cfg, dir, cfg.study.codec_steps);
    c.transformer.conditioning = Conditioning::none;
    c.checkpoints = {};
    fs::path tok_path;
    if (m == 0) {
      tok_path = kmeans_baseline(c).checkpoint;
    } else {
      c.codec.m = m;
      c.codec.channel_multipliers.clear();
      tok_path = train_vqgan(c).codec_checkpoint;
    }
    const auto tok = load_tokenizer(tok_path);
    EncodedData enc;
    enc.K = tok->vocab_size();
    enc.grids = encode_cached(*tok, tok_path, data, false, dir / "cache", data_key(cfg));
    c.transformer.window = std::max(enc.grids[0].h, enc.grids[0].w);
    c.transformer.explicit_seq_len = false;
    c.transformer.explicit_K = false;
    FitOptions o = fit_options(c, dir, cfg.study.transformer_steps);
    o.eval_every = cfg.study.eval_every;
    o.meta.set("data.codec", fs::absolute(tok_path).string());
    const FitResult fit = fit_transformer(enc, o);
    FStudyRow row;
    row.m = m;
    row.f = 1 << m;
    row.seq_len = fit.model->config().seq_len;
    row.rec_error = reconstruction_mse(*tok, data, 64);
    row.nll = fit.eval_curve.back().second;
    rows.push_back(row);
    report.add_row({std::to_string(m), std::to_string(row.f), std::to_string(row.seq_len), format_double(row.rec_error),
                    format_double(row.nll)});
    ExperimentConfig sc = c;
    sc.checkpoints.transformer = fit.checkpoint;
    sc.checkpoints.codec = tok_path;
    sc.sample.count = 2;
    sc.sample.width = sc.sample.height = 0;
    sample_images(sc, dir / "samples");
  }
  report.notes.push_back("rec_error is the mean squared error of pixels in [-1, 1]; nll is nats per data token on the "
                         "training images.");
  if (rows.size() >= 2) {
    const bool shape = rows.front().rec_error <= rows.back().rec_error;
    report.notes.push_back(std::string("rec_error(smallest f) <= rec_error(largest f): ") + (shape ? "yes" : "no"));
  }
  report.write_csv(out / "f_study.csv");
  report.write_markdown(out / "f_study.md");
  return rows;
}

OrderingResult ordering_study(const ExperimentConfig& cfg) {
  const fs::path out = prepare_out_dir(cfg);
  const Dataset data = load_dataset(cfg);
  ExperimentConfig base = cfg;
  base.transformer.conditioning = Conditioning::none;
  const fs::path codec_path = obtain_codec(base, out / "codec");
  const auto tok = load_tokenizer(codec_path);
  EncodedData enc;
  enc.K = tok->vocab_size();
  enc.grids = encode_cached(*tok, codec_path, data, false, out / "cache", data_key(cfg));

  OrderingResult res;
  Report report{"Scan order study", {"order_kind", "step0_nll", "final_nll", "best_nll", "best_step", "curve_file"}, {}, {}};
  for (ScanKind kind : cfg.study.orders) {
    ExperimentConfig c = base;
    c.transformer.order = kind;
    c.transformer.coords = false;
    FitOptions o = fit_options(c, out / "orders", cfg.study.transformer_steps);
    o.eval_every = cfg.study.eval_every;
    o.tag = std::string(scan_kind_name(kind)) + "_";
    o.meta.set("data.codec", fs::absolute(codec_path).string());
    const FitResult fit = fit_transformer(enc, o);
    OrderingRow row;
    row.order = kind;
    row.step0_nll = fit.eval_curve.front().second;
    row.final_nll = fit.eval_curve.back().second;
    const auto best = std::min_element(fit.eval_curve.begin(), fit.eval_curve.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    row.best_nll = best->second;
    row.best_step = best->first;
    row.curve = fs::path("orders") / (o.tag + "eval.csv");
    res.rows.push_back(row);
    report.add_row({std::string(scan_kind_name(kind)), format_double(row.step0_nll), format_double(row.final_nll),
                    format_double(row.best_nll), std::to_string(row.best_step), row.curve.string()});
  }
  auto find = [&](ScanKind k) -> const OrderingRow* {
    for (const auto& r : res.rows)
      if (r.order == k) return &r;
    return nullptr;
  };
  const OrderingRow* rm = find(ScanKind::row_major);
  const OrderingRow* sub = find(ScanKind::subsample);
  if (rm && sub) {
    res.row_major_beats_subsample = rm->final_nll <= sub->final_nll;
    report.notes.push_back(res.row_major_beats_subsample
                               ? "row_major final nll <= subsample final nll."
                               : "FLAG: row_major final nll > subsample final nll at this scale.");
  }
  const std::string eval_on = cfg.transformer.holdout
                                  ? std::to_string(cfg.transformer.holdout) + " held-out grids"
                                  : "the first " + std::to_string(cfg.transformer.eval_images) + " training grids";
  report.notes.push_back("All runs share the initial weights and the data order; nll in nats per data token on " +
                         eval_on + ".");
  report.write_csv(out / "ordering.csv");
  report.write_markdown(out / "ordering.md");
  return res;
}

SpeedResult speed_compare(const ExperimentConfig& cfg) {
  const fs::path out = prepare_out_dir(cfg);
  ExperimentConfig base = cfg;
  base.transformer.conditioning = Conditioning::none;
  const fs::path codec_path = obtain_codec(base, out / "codec");
  fs::path palette_path;
  if (cfg.checkpoints.palette) {
    palette_path = *cfg.checkpoints.palette;
  } else {
    palette_path = kmeans_baseline(sub_config(base, out / "palette", 0)).checkpoint;
  }
  const auto codec = load_tokenizer(codec_path);
  const auto palette = load_tokenizer(palette_path);
  const int64_t side = cfg.run.image_size;
  const int64_t lh = side / codec->factor(), ph = side / palette->factor();

  auto make = [&](int64_t K, int64_t h) {
    TransformerConfig t = cfg.transformer.model;
    t.K = static_cast<int>(K);
    t.cond_vocab = 0;
    t.num_classes = 0;
    t.seq_len = static_cast<int>(1 + h * h);
    return std::make_unique<Transformer>(t);
  };
  const auto latent_model = make(codec->vocab_size(), lh);
  const auto pixel_model = make(palette->vocab_size(), ph);

  SpeedResult res;
  res.latent_steps = lh * lh;
  res.pixel_steps = ph * ph;
  const int64_t reps = std::max<int64_t>(1, cfg.study.speed_repeats);
  TimingLog timing(out / "timing.csv");
  auto time_one = [&](const Transformer& model, const ImageTokenizer& tok, int64_t h, const std::string& what) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int64_t r = 0; r < reps; ++r) {
      SamplingParams p = cfg.sample.params;
      p.seed += static_cast<uint64_t>(r);
      const IndexGrid g = sample_grid(model, h, h, ScanKind::row_major, p);
      autograd::NoGradGuard ng;
      const Tensor img = tok.detokenize(std::span(&g, 1));
      if (r == 0) save_image(out / (what + "_sample.png"), img);
    }
    const double s = seconds_since(t0) / static_cast<double>(reps);
    timing.mark(0, what, static_cast<double>(h * h * reps));
    return s;
  };
  res.latent_seconds = time_one(*latent_model, *codec, lh, "latent");
  res.pixel_seconds = time_one(*pixel_model, *palette, ph, "pixel");

  Report report{"Latent vs pixel sampling speed", {"mode", "grid", "steps", "seconds_per_image"}, {}, {}};
  report.add_row({"latent", std::to_string(lh) + "x" + std::to_string(lh), std::to_string(res.latent_steps),
                  fixed(res.latent_seconds, 4)});
  report.add_row({"pixel", std::to_string(ph) + "x" + std::to_string(ph), std::to_string(res.pixel_steps),
                  fixed(res.pixel_seconds, 4)});
  report.notes.push_back("Speedup (pixel / latent, latent includes decoding): " + fixed(res.ratio(), 2) + "x");
  report.write_csv(out / "speed.csv");
  report.write_markdown(out / "speed.md");
  log_info("speedup " + fixed(res.ratio(), 2) + "x");
  return res;
}

}  // namespace tl
