#include <gtest/gtest.h>

#include <cmath>

#include "codec_oracle.hpp"
#include "test_util.hpp"
#include "tl/codec.hpp"
#include "tl/errors.hpp"
#include "tl/gradcheck.hpp"

namespace {

using tl::Codec;
using tl::CodecConfig;
using tl::Tensor;
using tl::testing::bit_equal;
using tl::testing::rand_image;
using tl::testing::randn;

CodecConfig tiny(int m, int image) {
  CodecConfig c;
  c.m = m;
  c.base_channels = 4;
  c.num_res_blocks = 1;
  c.norm_groups = 2;
  c.n_z = 3;
  c.K = 8;
  c.image_size = image;
  return c;
}

TEST(Codec, LatentSizeFollowsDownsamplingFactor) {
  tl::Rng rng(1);
  tl::autograd::NoGradGuard ng;
  CodecConfig c = tiny(4, 256);
  c.num_res_blocks = 0;
  EXPECT_EQ(Codec(c).encode(rand_image(1, 256, 256, rng)).shape(), (tl::Shape{1, 3, 16, 16}));
  c.m = 5;
  EXPECT_EQ(Codec(c).encode(rand_image(1, 256, 256, rng)).shape(), (tl::Shape{1, 3, 8, 8}));
  const Codec c0(tiny(0, 8));
  EXPECT_EQ(c0.encode(rand_image(2, 8, 8, rng)).shape(), (tl::Shape{2, 3, 8, 8}));
}

TEST(Codec, DecodeRestoresImageShapeInRange) {
  tl::Rng rng(2);
  tl::autograd::NoGradGuard ng;
  CodecConfig c = tiny(4, 256);
  c.num_res_blocks = 0;
  const Codec codec(c);
  const Tensor x = codec.decode(randn({1, 3, 16, 16}, rng, 5.0));
  EXPECT_EQ(x.shape(), (tl::Shape{1, 3, 256, 256}));
  for (double v : x.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  for (int m : {0, 1, 2}) {
    const Codec small(tiny(m, 16));
    const Tensor img = rand_image(2, 16, 12, rng);  // variable-size encoding
    EXPECT_EQ(small.reconstruct(img).x_hat.shape(), img.shape());
  }
}

TEST(Codec, ShapeErrors) {
  tl::Rng rng(3);
  const Codec codec(tiny(2, 16));
  EXPECT_THROW(codec.encode(rand_image(1, 10, 16, rng)), tl::ShapeError);
  EXPECT_THROW(codec.decode(Tensor::zeros({1, 4, 4, 4})), tl::ShapeError);
  CodecConfig bad = tiny(2, 18);
  EXPECT_THROW(bad.validate(), tl::ConfigError);
}

TEST(Codec, ZeroLatentDecodesDeterministically) {
  tl::autograd::NoGradGuard ng;
  const Codec a(tiny(1, 8)), b(tiny(1, 8));
  const Tensor z = Tensor::zeros({1, 3, 4, 4});
  EXPECT_TRUE(bit_equal(a.decode(z).data(), b.decode(z).data()));
  EXPECT_TRUE(bit_equal(a.decode(z).data(), a.decode(z).data()));
}

TEST(Codec, GradientReachesEveryEncoderParameter) {
  tl::Rng rng(4);
  CodecConfig c = tiny(1, 8);
  c.rec_loss_kind = tl::RecLossKind::squared_error;
  const Codec codec(c);
  // The attention output projection starts at zero, which would block the
  // gradient to the attention weights behind it.
  for (auto p : codec.encoder_params())
    if (p.name == "enc.attn.proj.weight")
      for (double& v : p.tensor.mutable_data()) v = 0.1 * rng.normal();
  const Tensor x = rand_image(2, 8, 8, rng);
  const auto r = codec.reconstruct(x);
  tl::autograd::backward(codec.vq_loss(x, r));
  for (const auto& p : codec.encoder_params()) {
    ASSERT_TRUE(p.tensor.has_grad()) << p.name;
    double norm = 0;
    for (double g : p.tensor.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << p.name;
  }
}

TEST(Codec, SingleCodeCollapsesLatent) {
  tl::Rng rng(5);
  CodecConfig c = tiny(1, 8);
  c.K = 1;
  const Codec codec(c);
  tl::autograd::NoGradGuard ng;
  const auto r = codec.reconstruct(rand_image(1, 8, 8, rng));
  for (int v : r.q.indices[0].values) EXPECT_EQ(v, 0);
  for (int64_t p = 1; p < 16; ++p)
    for (int64_t d = 0; d < 3; ++d) EXPECT_EQ(r.q.z_q.data()[p * 3 + d], r.q.z_q.data()[d]);
}

TEST(Codec, TokenizeDetokenizeMatchReconstruct) {
  tl::Rng rng(6);
  const Codec codec(tiny(1, 8));
  const Tensor x = rand_image(2, 8, 8, rng);
  tl::autograd::NoGradGuard ng;
  const auto r = codec.reconstruct(x);
  const auto grids = codec.tokenize(x);
  EXPECT_EQ(grids, r.q.indices);
  EXPECT_TRUE(bit_equal(codec.detokenize(grids).data(), r.x_hat.data()));
}

TEST(AttnBlock, IdentityAtInitialization) {
  tl::Rng rng(7);
  const CodecConfig c = tiny(0, 4);
  const tl::codec_detail::AttnBlock attn(4, c, rng);
  const Tensor x = randn({2, 4, 3, 3}, rng);
  EXPECT_TRUE(bit_equal(attn(x).data(), x.data()));
}

tl::codec_detail::AttnBlock randomized_attn(tl::Rng& rng) {
  const CodecConfig c = tiny(0, 4);
  tl::codec_detail::AttnBlock attn(4, c, rng);
  attn.proj.weight = randn({4, 4}, rng);
  return attn;
}

TEST(AttnBlock, SinglePositionPassesValuePath) {
  tl::Rng rng(8);
  const auto attn = randomized_attn(rng);
  const Tensor x = randn({1, 4, 1, 1}, rng);
  // Softmax over one logit is 1, so the branch is proj(v(norm(x))).
  const Tensor rows = tl::reshape(tl::channels_last(attn.norm(x)), {1, 4});
  const Tensor expect = tl::add(x, tl::reshape(attn.proj(attn.v(rows)), {1, 4, 1, 1}));
  const Tensor got = attn(x);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(got.data()[i], expect.data()[i], 1e-14);
}

TEST(AttnBlock, PermutationEquivariantOverPositions) {
  tl::Rng rng(9);
  const auto attn = randomized_attn(rng);
  const int64_t C = 4, P = 6;
  const Tensor x = randn({1, C, 1, P}, rng);
  const std::vector<int64_t> perm{3, 0, 5, 1, 4, 2};
  std::vector<double> xp(static_cast<std::size_t>(C * P));
  for (int64_t c = 0; c < C; ++c)
    for (int64_t p = 0; p < P; ++p) xp[c * P + p] = x.data()[c * P + perm[p]];
  const Tensor y = attn(x);
  const Tensor yp = attn(Tensor::from({1, C, 1, P}, xp));
  for (int64_t c = 0; c < C; ++c)
    for (int64_t p = 0; p < P; ++p) EXPECT_NEAR(yp.data()[c * P + p], y.data()[c * P + perm[p]], 1e-12);
}

TEST(Codec, LatentSiteIgnoresPixelsOutsideReceptiveField) {
  CodecConfig c = tiny(1, 16);
  c.norm = tl::NormKind::none;  // group statistics would couple every pixel
  c.attention = false;
  const Codec codec(c);
  // (kernel, stride, pad) of every layer on the path to ẑ.
  const int layers[][3] = {{3, 1, 1}, {3, 1, 1}, {3, 1, 1}, {3, 2, 1}, {3, 1, 1},
                           {3, 1, 1}, {3, 1, 1}, {3, 1, 1}, {3, 1, 1}};
  int64_t rf = 1, jump = 1, start = 0;
  for (const auto& l : layers) {
    rf += (l[0] - 1) * jump;
    start -= l[2] * jump;
    jump *= l[1];
  }
  ASSERT_EQ(rf, 29);
  const int64_t site = 3, lo = start + site * jump, hi = lo + rf - 1;

  tl::Rng rng(10);
  tl::autograd::NoGradGuard ng;
  const Tensor x = rand_image(1, 16, 16, rng);
  std::vector<double> outside(x.data().begin(), x.data().end());
  std::vector<double> inside = outside;
  for (int64_t ch = 0; ch < 3; ++ch)
    for (int64_t r = 0; r < 16; ++r)
      for (int64_t col = 0; col < 16; ++col) {
        const bool in = r >= lo && r <= hi && col >= lo && col <= hi;
        if (!in) outside[(ch * 16 + r) * 16 + col] += 0.5;
      }
  inside[(0 * 16 + std::max<int64_t>(lo, 0)) * 16 + std::max<int64_t>(lo, 0)] += 0.5;
  const Tensor z = codec.encode(x);
  const Tensor zo = codec.encode(Tensor::from(x.shape(), outside));
  const Tensor zi = codec.encode(Tensor::from(x.shape(), inside));
  bool inside_changed = false;
  for (int64_t d = 0; d < 3; ++d) {
    const int64_t idx = (d * 8 + site) * 8 + site;
    EXPECT_EQ(zo.data()[idx], z.data()[idx]);
    inside_changed |= zi.data()[idx] != z.data()[idx];
  }
  EXPECT_TRUE(inside_changed);
}

// Composite codec objective with the code assignment frozen, against central
// differences of the frozen-surrogate oracle.
TEST(Codec, FullLossGradientMatchesFiniteDifferences) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    CodecConfig c = tiny(1, 8);
    c.seed = seed + 1;
    c.rec_loss_kind = tl::RecLossKind::squared_error;
    const Codec codec(c);
    tl::Rng rng(20 + seed);
    const tl::testing::FrozenCodecObjective obj(codec, rand_image(1, 8, 8, rng));
    for (const auto& p : codec.params()) {
      if (p.name != "enc.conv_in.weight" && p.name != "enc.level0.res0.norm.gamma" && p.name != "enc.conv_out.bias" &&
          p.name != "dec.conv_out.weight" && p.name != "codebook" && p.name != "dec.mid1.conv2.bias")
        continue;
      EXPECT_LT(obj.check_param(p.tensor), 1e-3) << p.name << " seed " << seed;
    }
    EXPECT_LT(obj.check_input(), 1e-3) << "input seed " << seed;
  }
}

TEST(Codec, FeatureProxyLossIsFrozenAndNonNegative) {
  tl::Rng rng(11);
  CodecConfig c = tiny(1, 8);
  c.rec_loss_kind = tl::RecLossKind::feature_proxy;
  const Codec codec(c);
  const Tensor x = rand_image(1, 8, 8, rng);
  EXPECT_EQ(codec.rec_loss(x, x).item(), 0.0);
  const auto r = codec.reconstruct(x);
  const Tensor loss = codec.rec_loss(x, r.x_hat);
  EXPECT_GT(loss.item(), 0.0);
  tl::autograd::backward(loss);
  const auto state = codec.state();
  for (const auto& p : state) {
    if (p.name.rfind("proxy.", 0) == 0) {
      EXPECT_FALSE(p.tensor.has_grad()) << p.name;
    }
  }
  EXPECT_GT(state.size(), codec.params().size());
}

}  // namespace
