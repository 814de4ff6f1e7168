#include "tl/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tl/errors.hpp"

namespace tl {

PatchDiscriminator::PatchDiscriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  if (cfg.layers < 1 || cfg.base_channels < 1) throw ConfigError("discriminator needs at least one layer and channel");
  Rng rng(cfg.seed);
  int in = 3, out = cfg.base_channels;
  for (int i = 0; i < cfg.layers; ++i) {
    convs_.emplace_back(in, out, 4, 2, 1, rng);
    if (i > 0 && cfg.norm) norms_.emplace_back(out, std::gcd(out, cfg.norm_groups));
    in = out;
    out *= 2;
  }
  head_ = nn::Conv2d(in, 1, 3, 1, 1, rng);
}

Tensor PatchDiscriminator::operator()(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("discriminator: expected B×3×H×W, got " + shape_str(x.shape()));
  Tensor h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i](h);
    if (i > 0 && cfg_.norm) h = norms_[i - 1](h);
    h = leaky_relu(h, 0.2);
  }
  return head_(h);
}

nn::ParamList PatchDiscriminator::params() const {
  nn::ParamList out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect(out, "disc.conv" + std::to_string(i) + ".");
    if (i > 0 && cfg_.norm) norms_[i - 1].collect(out, "disc.norm" + std::to_string(i) + ".");
  }
  head_.collect(out, "disc.head.");
  return out;
}

int PatchDiscriminator::receptive_field() const {
  // Walk back from one output site: r ← (r − 1)·stride + k.
  int r = 3;
  for (int i = 0; i < cfg_.layers; ++i) r = (r - 1) * 2 + 4;
  return r;
}

GanLosses gan_losses(const Tensor& real_logits, const Tensor& fake_logits, GeneratorLoss kind) {
  GanLosses out;
  out.d_loss = add(mean(softplus(scale(real_logits, -1.0))), mean(softplus(fake_logits)));
  out.g_loss = kind == GeneratorLoss::non_saturating ? mean(softplus(scale(fake_logits, -1.0)))
                                                     : scale(mean(softplus(fake_logits)), -1.0);
  return out;
}

double adaptive_weight_unclamped(double rec_grad_norm, double gan_grad_norm) {
  if (!std::isfinite(rec_grad_norm) || !std::isfinite(gan_grad_norm))
    throw NumericError("adaptive weight: non-finite gradient norm");
  if (rec_grad_norm < 0 || gan_grad_norm < 0) throw NumericError("adaptive weight: negative gradient norm");
  return rec_grad_norm / (gan_grad_norm + kLambdaDelta);
}

double adaptive_weight(double rec_grad_norm, double gan_grad_norm) {
  return std::clamp(adaptive_weight_unclamped(rec_grad_norm, gan_grad_norm), 0.0, kLambdaMax);
}

namespace {

double l2(const std::vector<double>& g) {
  double s = 0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

}  // namespace

GanTrainer::GanTrainer(Codec& codec, PatchDiscriminator& disc, const GanTrainConfig& cfg)
    : codec_(codec), disc_(disc), cfg_(cfg), g_opt_(codec.params(), cfg.g_adam), d_opt_(disc.params(), cfg.d_adam) {}

GanStepReport GanTrainer::step(const Tensor& batch) {
  GanStepReport rep;
  rep.step = step_;
  const Tensor fake = generator_phase(batch, rep);
  discriminator_phase(batch, fake, rep);
  autograd::clear_tape();
  ++step_;
  return rep;
}

Tensor GanTrainer::generator_phase(const Tensor& batch, GanStepReport& rep) {
  const nn::ParamList d_params = disc_.params();
  nn::set_trainable(d_params, false);
  g_opt_.zero_grad();
  const Reconstruction r = codec_.reconstruct(batch);
  const Tensor rec = codec_.rec_loss(batch, r.x_hat);
  const Tensor vq_terms = add(r.q.codebook_loss, scale(r.q.commitment_loss, codec_.config().beta));
  rep.rec_loss = rec.item();
  rep.vq_terms = vq_terms.item();

  Tensor total = add(rec, vq_terms);
  const Tensor fake_logits = disc_(r.x_hat);
  const Tensor g_adv = gan_losses(fake_logits, fake_logits, cfg_.generator_loss).g_loss;
  const Tensor theta_L = codec_.last_layer_weight();
  bool lambda_ok = true;
  try {
    const double rec_norm = l2(autograd::grad(rec, std::span(&theta_L, 1), true)[0]);
    const double gan_norm = l2(autograd::grad(g_adv, std::span(&theta_L, 1), true)[0]);
    rep.lambda = adaptive_weight(rec_norm, gan_norm) * cfg_.disc_weight;
  } catch (const NumericError& e) {
    lambda_ok = false;
    rep.lambda = 0;
    if (warn) warn("step " + std::to_string(step_) + ": " + e.what() + "; adversarial term skipped");
  }
  rep.disc_active = step_ >= cfg_.disc_start && lambda_ok;
  if (rep.disc_active) total = add(total, scale(g_adv, rep.lambda));
  rep.g_loss = total.item();
  autograd::backward(total);
  g_opt_.step();
  nn::set_trainable(d_params, true);
  return r.x_hat.detach();
}

void GanTrainer::discriminator_phase(const Tensor& batch, const Tensor& fake, GanStepReport& rep) {
  if (step_ < cfg_.disc_start) {
    autograd::NoGradGuard ng;
    rep.d_loss = gan_losses(disc_(batch), disc_(fake)).d_loss.item();
    return;
  }
  const nn::ParamList g_params = codec_.params();
  nn::set_trainable(g_params, false);
  d_opt_.zero_grad();
  const GanLosses dl = gan_losses(disc_(batch), disc_(fake));
  rep.d_loss = dl.d_loss.item();
  autograd::backward(dl.d_loss);
  d_opt_.step();
  nn::set_trainable(g_params, true);
}

}  // namespace tl
