#include "tl/codec.hpp"

#include <numeric>

#include "tl/errors.hpp"

namespace tl {

using codec_detail::AttnBlock;
using codec_detail::Norm;
using codec_detail::ResBlock;

RecLossKind parse_rec_loss_kind(std::string_view name) {
  if (name == "squared_error") return RecLossKind::squared_error;
  if (name == "abs_error") return RecLossKind::abs_error;
  if (name == "feature_proxy") return RecLossKind::feature_proxy;
  throw ConfigError("unknown rec_loss_kind '" + std::string(name) +
                    "' (expected squared_error, abs_error or feature_proxy)");
}

std::string_view rec_loss_kind_name(RecLossKind kind) {
  switch (kind) {
    case RecLossKind::squared_error: return "squared_error";
    case RecLossKind::abs_error: return "abs_error";
    case RecLossKind::feature_proxy: return "feature_proxy";
  }
  return "?";
}

void CodecConfig::validate() const {
  if (m < 0 || m > 8) throw ConfigError("codec m must be in [0, 8]");
  if (base_channels < 1 || n_z < 1 || K < 1 || num_res_blocks < 0 || norm_groups < 1)
    throw ConfigError("codec sizes must be positive");
  if (!channel_multipliers.empty() && static_cast<int>(channel_multipliers.size()) != m + 1)
    throw ConfigError("channel_multipliers needs m+1 = " + std::to_string(m + 1) + " entries");
  for (int c : channel_multipliers)
    if (c < 1) throw ConfigError("channel multipliers must be positive");
  if (image_size < 1 || image_size % factor() != 0)
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by 2^m = " + std::to_string(factor()));
  if (beta < 0) throw ConfigError("beta must be non-negative");
}

int CodecConfig::channels_at(int level) const {
  return base_channels * (channel_multipliers.empty() ? 1 : channel_multipliers[static_cast<std::size_t>(level)]);
}

Tensor channels_last(const Tensor& x) { return permute(x, {0, 2, 3, 1}); }
Tensor channels_first(const Tensor& x) { return permute(x, {0, 3, 1, 2}); }

namespace codec_detail {

Norm::Norm(int channels, const CodecConfig& cfg) : enabled(cfg.norm == NormKind::group) {
  if (enabled) gn = nn::GroupNorm(channels, std::gcd(channels, cfg.norm_groups));
}

void Norm::collect(nn::ParamList& out, const std::string& prefix) const {
  if (enabled) gn.collect(out, prefix);
}

ResBlock::ResBlock(int in_ch, int out_ch, const CodecConfig& cfg, Rng& rng)
    : conv1(in_ch, out_ch, 3, 1, 1, rng), conv2(out_ch, out_ch, 3, 1, 1, rng), norm(out_ch, cfg), has_skip(in_ch != out_ch) {
  if (has_skip) skip = nn::Conv2d(in_ch, out_ch, 1, 1, 0, rng);
}

Tensor ResBlock::operator()(const Tensor& x) const {
  const Tensor h = conv2(silu(norm(conv1(x))));
  return add(has_skip ? skip(x) : x, h);
}

void ResBlock::collect(nn::ParamList& out, const std::string& prefix) const {
  conv1.collect(out, prefix + "conv1.");
  norm.collect(out, prefix + "norm.");
  conv2.collect(out, prefix + "conv2.");
  if (has_skip) skip.collect(out, prefix + "skip.");
}

AttnBlock::AttnBlock(int channels, const CodecConfig& cfg, Rng& rng)
    : norm(channels, cfg), q(channels, channels, rng), k(channels, channels, rng), v(channels, channels, rng),
      proj(channels, channels, rng) {
  proj.weight = nn::constant_param({channels, channels}, 0.0);
  proj.bias = nn::constant_param({channels}, 0.0);
}

Tensor AttnBlock::operator()(const Tensor& x) const {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Tensor rows = reshape(channels_last(norm(x)), {B * H * W, C});
  const Tensor a = attention(q(rows), k(rows), v(rows), static_cast<int>(B), 1, false);
  const Tensor out = channels_first(reshape(proj(a), {B, H, W, C}));
  return add(x, out);
}

void AttnBlock::collect(nn::ParamList& out, const std::string& prefix) const {
  norm.collect(out, prefix + "norm.");
  q.collect(out, prefix + "q.");
  k.collect(out, prefix + "k.");
  v.collect(out, prefix + "v.");
  proj.collect(out, prefix + "proj.");
}

Tensor Encoder::operator()(const Tensor& x) const {
  Tensor h = conv_in(x);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    for (const ResBlock& b : blocks[l]) h = b(h);
    h = down[l](h);
  }
  h = mid1(h);
  if (use_attn) h = attn(h);
  h = mid2(h);
  return conv_out(silu(norm_out(h)));
}

void Encoder::collect(nn::ParamList& out, const std::string& prefix) const {
  conv_in.collect(out, prefix + "conv_in.");
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    for (std::size_t i = 0; i < blocks[l].size(); ++i)
      blocks[l][i].collect(out, prefix + "level" + std::to_string(l) + ".res" + std::to_string(i) + ".");
    down[l].collect(out, prefix + "level" + std::to_string(l) + ".down.");
  }
  mid1.collect(out, prefix + "mid1.");
  if (use_attn) attn.collect(out, prefix + "attn.");
  mid2.collect(out, prefix + "mid2.");
  norm_out.collect(out, prefix + "norm_out.");
  conv_out.collect(out, prefix + "conv_out.");
}

Tensor Decoder::operator()(const Tensor& z) const {
  Tensor h = mid1(conv_in(z));
  if (use_attn) h = attn(h);
  h = mid2(h);
  for (std::size_t i = blocks.size(); i-- > 0;) {
    h = up[i](upsample_nearest2x(h));
    for (const ResBlock& b : blocks[i]) h = b(h);
  }
  return tanh(conv_out(silu(norm_out(h))));
}

void Decoder::collect(nn::ParamList& out, const std::string& prefix) const {
  conv_in.collect(out, prefix + "conv_in.");
  mid1.collect(out, prefix + "mid1.");
  if (use_attn) attn.collect(out, prefix + "attn.");
  mid2.collect(out, prefix + "mid2.");
  for (std::size_t l = blocks.size(); l-- > 0;) {
    up[l].collect(out, prefix + "level" + std::to_string(l) + ".up.");
    for (std::size_t i = 0; i < blocks[l].size(); ++i)
      blocks[l][i].collect(out, prefix + "level" + std::to_string(l) + ".res" + std::to_string(i) + ".");
  }
  norm_out.collect(out, prefix + "norm_out.");
  conv_out.collect(out, prefix + "conv_out.");
}

FeatureProxy::FeatureProxy(uint64_t seed) {
  Rng rng(seed);
  const int shapes[4][3] = {{3, 8, 1}, {8, 16, 2}, {16, 16, 1}, {16, 32, 2}};
  for (const auto& s : shapes) {
    layers.emplace_back(s[0], s[1], 3, s[2], 1, rng);
    layers.back().weight.set_requires_grad(false);
    layers.back().bias.set_requires_grad(false);
  }
}

std::vector<Tensor> FeatureProxy::features(const Tensor& x) const {
  std::vector<Tensor> out;
  Tensor h = x;
  for (const nn::Conv2d& c : layers) {
    h = leaky_relu(c(h), 0.2);
    out.push_back(h);
  }
  return out;
}

void FeatureProxy::collect(nn::ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + std::to_string(i) + ".");
}

}  // namespace codec_detail

namespace {

Codebook make_codebook(const CodecConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed ^ 0x636f6465626f6f6bULL);
  return Codebook(cfg.K, cfg.n_z, rng);
}

}  // namespace

Codec::Codec(const CodecConfig& cfg) : cfg_(cfg), codebook_(make_codebook(cfg)) {
  Rng rng(cfg.seed);
  const int m = cfg.m;

  auto& e = encoder_;
  e.conv_in = nn::Conv2d(3, cfg.channels_at(0), 3, 1, 1, rng);
  int prev = cfg.channels_at(0);
  for (int l = 0; l < m; ++l) {
    std::vector<ResBlock> level;
    for (int i = 0; i < cfg.num_res_blocks; ++i) {
      level.emplace_back(prev, cfg.channels_at(l), cfg, rng);
      prev = cfg.channels_at(l);
    }
    e.blocks.push_back(std::move(level));
    e.down.emplace_back(prev, prev, 3, 2, 1, rng);
  }
  e.mid1 = ResBlock(prev, cfg.channels_at(m), cfg, rng);
  e.use_attn = cfg.attention;
  if (cfg.attention) e.attn = AttnBlock(cfg.channels_at(m), cfg, rng);
  e.mid2 = ResBlock(cfg.channels_at(m), cfg.channels_at(m), cfg, rng);
  e.norm_out = Norm(cfg.channels_at(m), cfg);
  e.conv_out = nn::Conv2d(cfg.channels_at(m), cfg.n_z, 3, 1, 1, rng);

  auto& d = decoder_;
  d.conv_in = nn::Conv2d(cfg.n_z, cfg.channels_at(m), 3, 1, 1, rng);
  d.mid1 = ResBlock(cfg.channels_at(m), cfg.channels_at(m), cfg, rng);
  d.use_attn = cfg.attention;
  if (cfg.attention) d.attn = AttnBlock(cfg.channels_at(m), cfg, rng);
  d.mid2 = ResBlock(cfg.channels_at(m), cfg.channels_at(m), cfg, rng);
  d.up.resize(static_cast<std::size_t>(m));
  d.blocks.resize(static_cast<std::size_t>(m));
  prev = cfg.channels_at(m);
  for (int l = m - 1; l >= 0; --l) {
    d.up[static_cast<std::size_t>(l)] = nn::Conv2d(prev, prev, 3, 1, 1, rng);
    for (int i = 0; i < cfg.num_res_blocks; ++i) {
      d.blocks[static_cast<std::size_t>(l)].emplace_back(prev, cfg.channels_at(l), cfg, rng);
      prev = cfg.channels_at(l);
    }
  }
  d.norm_out = Norm(prev, cfg);
  d.conv_out = nn::Conv2d(prev, 3, 3, 1, 1, rng);

  if (cfg.rec_loss_kind == RecLossKind::feature_proxy) {
    has_proxy_ = true;
    proxy_ = codec_detail::FeatureProxy(cfg.seed ^ 0x70726f7879ULL);
  }
}

Tensor Codec::encode(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("encode: expected B×3×H×W, got " + shape_str(x.shape()));
  const int64_t f = cfg_.factor();
  if (x.dim(2) % f != 0 || x.dim(3) % f != 0)
    throw ShapeError("encode: image " + std::to_string(x.dim(2)) + "×" + std::to_string(x.dim(3)) +
                     " is not divisible by 2^m = " + std::to_string(f));
  return encoder_(x);
}

Tensor Codec::decode(const Tensor& z) const {
  if (z.rank() != 4 || z.dim(1) != cfg_.n_z)
    throw ShapeError("decode: expected B×" + std::to_string(cfg_.n_z) + "×h×w, got " + shape_str(z.shape()));
  return decoder_(z);
}

Reconstruction Codec::reconstruct(const Tensor& x) const {
  Reconstruction r;
  r.z_hat = channels_last(encode(x));
  r.q = quantize(r.z_hat, codebook_);
  r.x_hat = decode(channels_first(straight_through(r.z_hat, r.q.z_q)));
  return r;
}

Reconstruction Codec::reconstruct_with(const Tensor& x, std::vector<IndexGrid> indices) const {
  Reconstruction r;
  r.z_hat = channels_last(encode(x));
  r.q = quantize_with(r.z_hat, codebook_, std::move(indices));
  r.x_hat = decode(channels_first(straight_through(r.z_hat, r.q.z_q)));
  return r;
}

Tensor Codec::rec_loss(const Tensor& x, const Tensor& x_hat) const {
  switch (cfg_.rec_loss_kind) {
    case RecLossKind::squared_error: return squared_error_loss(x, x_hat);
    case RecLossKind::abs_error: return abs_error_loss(x, x_hat);
    case RecLossKind::feature_proxy: {
      Tensor loss = abs_error_loss(x, x_hat);
      const auto fa = proxy_.features(x);
      const auto fb = proxy_.features(x_hat);
      for (std::size_t i = 0; i < fa.size(); ++i) loss = add(loss, squared_error_loss(fa[i].detach(), fb[i]));
      return loss;
    }
  }
  throw ContractError("rec_loss: unknown kind");
}

Tensor Codec::vq_loss(const Tensor& x, const Reconstruction& r) const {
  return tl::vq_loss(x, r.x_hat, r.q, cfg_.beta, [this](const Tensor& a, const Tensor& b) { return rec_loss(a, b); });
}

std::vector<IndexGrid> Codec::tokenize(const Tensor& x) const {
  autograd::NoGradGuard ng;
  return quantize(channels_last(encode(x)), codebook_).indices;
}

Tensor Codec::detokenize(std::span<const IndexGrid> grids) const {
  autograd::NoGradGuard ng;
  return decode(channels_first(lookup(grids, codebook_)));
}

nn::ParamList Codec::params() const {
  nn::ParamList out = encoder_params();
  decoder_.collect(out, "dec.");
  out.push_back({"codebook", codebook_.entries()});
  return out;
}

nn::ParamList Codec::encoder_params() const {
  nn::ParamList out;
  encoder_.collect(out, "enc.");
  return out;
}

nn::ParamList Codec::state() const {
  nn::ParamList out = params();
  if (has_proxy_) proxy_.collect(out, "proxy.");
  return out;
}

}  // namespace tl
