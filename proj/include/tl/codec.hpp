#pragma once

#include <span>
#include <string>
#include <vector>

#include "tl/nn.hpp"
#include "tl/quantizer.hpp"

namespace tl {

enum class RecLossKind { squared_error, abs_error, feature_proxy };
enum class NormKind { group, none };

RecLossKind parse_rec_loss_kind(std::string_view name);
std::string_view rec_loss_kind_name(RecLossKind kind);

struct CodecConfig {
  int m = 2;                              // downsampling blocks, f = 2^m
  int base_channels = 32;
  std::vector<int> channel_multipliers;   // one per level 0..m; empty means all 1
  int num_res_blocks = 2;
  int norm_groups = 8;
  NormKind norm = NormKind::group;
  bool attention = true;
  int n_z = 32;
  int K = 128;
  int image_size = 32;
  RecLossKind rec_loss_kind = RecLossKind::abs_error;
  double beta = 0.25;
  uint64_t seed = 1;

  void validate() const;
  int factor() const { return 1 << m; }
  int channels_at(int level) const;
  int latent_size() const { return image_size / factor(); }
};

namespace codec_detail {

// GroupNorm whose group count is reduced to a divisor of the channel count, or a
// pass-through when normalization is disabled.
struct Norm {
  bool enabled = false;
  nn::GroupNorm gn;

  Norm() = default;
  Norm(int channels, const CodecConfig& cfg);
  Tensor operator()(const Tensor& x) const { return enabled ? gn(x) : x; }
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

struct ResBlock {
  nn::Conv2d conv1, conv2;
  Norm norm;
  bool has_skip = false;
  nn::Conv2d skip;  // 1×1 when channel counts differ

  ResBlock() = default;
  ResBlock(int in_ch, int out_ch, const CodecConfig& cfg, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

// Single-head self-attention over all spatial positions with a residual. The
// output projection starts at zero so the block is the identity at init.
struct AttnBlock {
  Norm norm;
  nn::Linear q, k, v, proj;

  AttnBlock() = default;
  AttnBlock(int channels, const CodecConfig& cfg, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

struct Encoder {
  nn::Conv2d conv_in;
  std::vector<std::vector<ResBlock>> blocks;  // per level
  std::vector<nn::Conv2d> down;
  ResBlock mid1, mid2;
  AttnBlock attn;
  bool use_attn = true;
  Norm norm_out;
  nn::Conv2d conv_out;

  Tensor operator()(const Tensor& x) const;
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

struct Decoder {
  nn::Conv2d conv_in;
  ResBlock mid1, mid2;
  AttnBlock attn;
  bool use_attn = true;
  std::vector<nn::Conv2d> up;                 // up[l] brings level l+1 to level l
  std::vector<std::vector<ResBlock>> blocks;  // per level
  Norm norm_out;
  nn::Conv2d conv_out;

  Tensor operator()(const Tensor& z) const;
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

// Frozen random conv features used by the feature_proxy reconstruction loss.
struct FeatureProxy {
  std::vector<nn::Conv2d> layers;

  FeatureProxy() = default;
  explicit FeatureProxy(uint64_t seed);
  std::vector<Tensor> features(const Tensor& x) const;
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

}  // namespace codec_detail

struct Reconstruction {
  Tensor x_hat;
  QuantizationResult q;
  Tensor z_hat;  // B×h×w×n_z encoder output, before quantization
};

// Anything that maps images to index grids and back; the codec and the
// per-pixel palette tokenizer both qualify.
class ImageTokenizer {
 public:
  virtual ~ImageTokenizer() = default;
  virtual int64_t vocab_size() const = 0;
  virtual int factor() const = 0;
  // x: B×3×H×W in [−1, 1].
  virtual std::vector<IndexGrid> tokenize(const Tensor& x) const = 0;
  virtual Tensor detokenize(std::span<const IndexGrid> grids) const = 0;
};

class Codec : public ImageTokenizer {
 public:
  explicit Codec(const CodecConfig& cfg);

  const CodecConfig& config() const { return cfg_; }

  // x: B×3×H×W → B×n_z×H/f×W/f.
  Tensor encode(const Tensor& x) const;
  // z: B×n_z×h×w → B×3×h·f×w·f in [−1, 1].
  Tensor decode(const Tensor& z) const;
  Reconstruction reconstruct(const Tensor& x) const;
  // Same as reconstruct with the code assignment held fixed.
  Reconstruction reconstruct_with(const Tensor& x, std::vector<IndexGrid> indices) const;

  Tensor rec_loss(const Tensor& x, const Tensor& x_hat) const;
  // rec_loss + codebook + β·commitment.
  Tensor vq_loss(const Tensor& x, const Reconstruction& r) const;

  int64_t vocab_size() const override { return cfg_.K; }
  int factor() const override { return cfg_.factor(); }
  std::vector<IndexGrid> tokenize(const Tensor& x) const override;
  Tensor detokenize(std::span<const IndexGrid> grids) const override;

  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }
  // Weight of the final decoder convolution.
  const Tensor& last_layer_weight() const { return decoder_.conv_out.weight; }

  // Trainable parameters (encoder, decoder, codebook).
  nn::ParamList params() const;
  nn::ParamList encoder_params() const;
  // Everything a checkpoint must hold, including frozen buffers.
  nn::ParamList state() const;

 private:
  CodecConfig cfg_;
  codec_detail::Encoder encoder_;
  codec_detail::Decoder decoder_;
  Codebook codebook_;
  bool has_proxy_ = false;
  codec_detail::FeatureProxy proxy_;
};

// B×C×h×w ↔ B×h×w×C
Tensor channels_last(const Tensor& x);
Tensor channels_first(const Tensor& x);

}  // namespace tl
