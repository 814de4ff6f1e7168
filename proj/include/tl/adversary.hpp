#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tl/codec.hpp"
#include "tl/optim.hpp"

namespace tl {

struct DiscriminatorConfig {
  int layers = 3;          // stride-2 convolutions before the 1-channel head
  int base_channels = 32;
  bool norm = true;        // GroupNorm from the second layer on
  int norm_groups = 8;
  uint64_t seed = 2;
};

// Convolutional patch classifier emitting one raw logit per receptive-field patch.
class PatchDiscriminator {
 public:
  explicit PatchDiscriminator(const DiscriminatorConfig& cfg);

  // x: B×3×H×W → B×1×H/2^layers×W/2^layers logits.
  Tensor operator()(const Tensor& x) const;
  const DiscriminatorConfig& config() const { return cfg_; }
  nn::ParamList params() const;
  // Side of the input region one output logit depends on.
  int receptive_field() const;

 private:
  DiscriminatorConfig cfg_;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::GroupNorm> norms_;  // norms_[i] follows convs_[i + 1]
  nn::Conv2d head_;
};

struct GanLosses {
  Tensor d_loss;  // mean softplus(−real) + mean softplus(fake)
  Tensor g_loss;  // generator adversarial term
};

enum class GeneratorLoss { non_saturating, saturating };

GanLosses gan_losses(const Tensor& real_logits, const Tensor& fake_logits,
                     GeneratorLoss kind = GeneratorLoss::non_saturating);

inline constexpr double kLambdaDelta = 1e-6;
inline constexpr double kLambdaMax = 1e4;

// rec / (gan + δ), clamped to [0, kLambdaMax]. Non-finite or negative norms
// throw NumericError.
double adaptive_weight(double rec_grad_norm, double gan_grad_norm);
// Same ratio without the clamp.
double adaptive_weight_unclamped(double rec_grad_norm, double gan_grad_norm);

struct GanStepReport {
  int64_t step = 0;
  double g_loss = 0;    // total generator-side objective
  double d_loss = 0;
  double lambda = 0;
  double rec_loss = 0;
  double vq_terms = 0;  // codebook + β·commitment
  bool disc_active = false;
};

struct GanTrainConfig {
  int64_t disc_start = 1000;
  double disc_weight = 1.0;   // multiplies λ
  GeneratorLoss generator_loss = GeneratorLoss::non_saturating;
  AdamConfig g_adam{};
  AdamConfig d_adam{};
};

// Owns the two optimizers and performs the alternating generator/discriminator
// update on one batch.
class GanTrainer {
 public:
  GanTrainer(Codec& codec, PatchDiscriminator& disc, const GanTrainConfig& cfg);

  GanStepReport step(const Tensor& batch);
  // The two halves of step(). The generator phase returns the detached
  // reconstruction the discriminator phase consumes.
  Tensor generator_phase(const Tensor& batch, GanStepReport& rep);
  void discriminator_phase(const Tensor& batch, const Tensor& fake, GanStepReport& rep);

  int64_t steps_done() const { return step_; }
  void set_steps_done(int64_t s) { step_ = s; }
  Adam& g_opt() { return g_opt_; }
  Adam& d_opt() { return d_opt_; }
  const GanTrainConfig& config() const { return cfg_; }
  // Called with a message when λ cannot be computed and the adversarial term is skipped.
  std::function<void(const std::string&)> warn;

 private:
  Codec& codec_;
  PatchDiscriminator& disc_;
  GanTrainConfig cfg_;
  Adam g_opt_, d_opt_;
  int64_t step_ = 0;
};

}  // namespace tl
