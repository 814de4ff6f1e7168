#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "tl/errors.hpp"
#include "tl/gradcheck.hpp"
#include "tl/optim.hpp"
#include "tl/sampler.hpp"
#include "tl/transformer.hpp"

namespace {

using tl::Tensor;
using tl::TokenSequence;
using tl::Transformer;
using tl::TransformerConfig;
using tl::testing::bit_equal;
using tl::testing::randn;

TransformerConfig tiny(int K = 16, int layers = 2) {
  TransformerConfig c;
  c.K = K;
  c.seq_len = 32;
  c.n_layers = layers;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.coord_buckets = 0;
  return c;
}

void randomize_head(const Transformer& m, uint64_t seed) {
  tl::Rng rng(seed);
  for (auto p : m.params())
    if (p.name == "head.weight")
      for (double& v : p.tensor.mutable_data()) v = 0.5 * rng.normal();
}

std::vector<int> random_tokens(int n, int vocab, tl::Rng& rng) {
  std::vector<int> t(static_cast<std::size_t>(n));
  for (int& v : t) v = static_cast<int>(rng.below(static_cast<uint64_t>(vocab)));
  return t;
}

void train(const Transformer& m, std::span<const TokenSequence> seqs, int steps, double lr) {
  tl::AdamConfig ac;
  ac.lr = lr;
  tl::Adam opt(m.params(), ac);
  for (int i = 0; i < steps; ++i) {
    opt.zero_grad();
    tl::autograd::backward(m.nll(seqs));
    opt.step();
  }
}

TEST(CausalAttention, Examples) {
  tl::Rng rng(1);
  const Tensor v = randn({1, 4}, rng);
  EXPECT_TRUE(bit_equal(tl::attention(randn({1, 4}, rng), randn({1, 4}, rng), v, 1, 1, true).data(), v.data()));
  const Tensor same = Tensor::full({5, 3}, 0.7);
  const Tensor vals = randn({5, 2}, rng);
  const Tensor out = tl::attention(same, same, vals, 1, 1, true);
  for (int i = 0; i < 5; ++i)
    for (int d = 0; d < 2; ++d) {
      double m = 0;
      for (int j = 0; j <= i; ++j) m += vals.data()[j * 2 + d];
      EXPECT_NEAR(out.data()[i * 2 + d], m / (i + 1), 1e-14);
    }
}

TEST(Transformer, LogitsBeforePerturbationAreBitIdentical) {
  const Transformer m(tiny(16, 3));
  randomize_head(m, 2);
  tl::Rng rng(3);
  auto tokens = random_tokens(20, m.config().vocab_size(), rng);
  tl::autograd::NoGradGuard ng;
  const Tensor base = m.forward(tokens, 1);
  for (int j = 0; j < 20; ++j) {
    auto t2 = tokens;
    t2[static_cast<std::size_t>(j)] = (t2[static_cast<std::size_t>(j)] + 1) % m.config().vocab_size();
    const Tensor l = m.forward(t2, 1);
    const std::size_t row = 16;
    EXPECT_TRUE(bit_equal(l.data().subspan(0, j * row), base.data().subspan(0, j * row))) << j;
    EXPECT_FALSE(bit_equal(l.data().subspan(j * row, row), base.data().subspan(j * row, row))) << j;
  }
}

TEST(Transformer, UntrainedNllIsLogK) {
  const Transformer m(tiny(64));
  tl::Rng rng(4);
  tl::IndexGrid g(4, 4);
  for (int& v : g.values) v = static_cast<int>(rng.below(64));
  const auto seq = tl::make_sequence({}, g, tl::ScanOrder::build(tl::ScanKind::row_major, 4, 4), m.config());
  EXPECT_NEAR(m.nll(seq).item(), std::log(64.0), 1e-12);
}

TEST(Transformer, NllMatchesTokenByTokenChainRule) {
  const Transformer m(tiny());
  randomize_head(m, 5);
  tl::Rng rng(6);
  tl::IndexGrid g(3, 3);
  for (int& v : g.values) v = static_cast<int>(rng.below(16));
  tl::Condition cond;
  const auto seq = tl::make_sequence(cond, g, tl::ScanOrder::build(tl::ScanKind::spiral_out, 3, 3), m.config());
  const double full = m.nll(seq).item();

  Transformer::Decoder dec(m);
  const Tensor all = m.forward(seq);
  double total = 0;
  for (std::size_t i = 0; i + 1 < seq.tokens.size(); ++i) {
    const auto logits = dec.push(seq.tokens[i]);
    ASSERT_TRUE(bit_equal(logits, all.data().subspan(i * 16, 16))) << "row " << i;
    if (!seq.is_data(static_cast<int64_t>(i) + 1)) continue;
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double z = 0;
    for (double l : logits) z += std::exp(l - mx);
    total += -(logits[static_cast<std::size_t>(seq.tokens[i + 1])] - mx - std::log(z));
  }
  EXPECT_NEAR(full, total / static_cast<double>(seq.data_len()), 1e-12);
}

TEST(Transformer, BatchCompositionDoesNotLeak) {
  const Transformer m(tiny());
  randomize_head(m, 7);
  tl::Rng rng(8);
  const auto a = random_tokens(10, m.config().vocab_size(), rng);
  const auto b = random_tokens(10, m.config().vocab_size(), rng);
  std::vector<int> both(a);
  both.insert(both.end(), b.begin(), b.end());
  tl::autograd::NoGradGuard ng;
  const Tensor la = m.forward(a, 1), lb = m.forward(b, 1), lab = m.forward(both, 2);
  EXPECT_TRUE(bit_equal(lab.data().subspan(0, 160), la.data()));
  EXPECT_TRUE(bit_equal(lab.data().subspan(160, 160), lb.data()));
}

TEST(Transformer, NllGradientMatchesFiniteDifferences) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    TransformerConfig c = tiny(8, 1);
    c.seed = seed;
    const Transformer m(c);
    randomize_head(m, seed + 10);
    tl::Rng rng(seed);
    tl::IndexGrid g(2, 3);
    for (int& v : g.values) v = static_cast<int>(rng.below(8));
    const auto seq = tl::make_sequence({}, g, tl::ScanOrder::build(tl::ScanKind::row_major, 2, 3), c);
    for (const auto& p : m.params()) {
      if (p.name != "head.weight" && p.name != "block0.wq.weight" && p.name != "block0.fc1.bias" &&
          p.name != "block0.ln1.gamma" && p.name != "pos_emb")
        continue;
      EXPECT_LT(tl::grad_check_param([&] { return m.nll(seq); }, p.tensor), 1e-4) << p.name << " seed " << seed;
    }
  }
}

TEST(Transformer, MemorizesOneSequence) {
  const TransformerConfig c = tiny(8);
  const Transformer m(c);
  tl::Rng rng(9);
  tl::IndexGrid g(4, 4);
  for (int& v : g.values) v = static_cast<int>(rng.below(8));
  const auto order = tl::ScanOrder::build(tl::ScanKind::row_major, 4, 4);
  const TokenSequence seq = tl::make_sequence({}, g, order, c);
  train(m, std::span(&seq, 1), 150, 1e-2);
  tl::SamplingParams greedy;
  greedy.top_k = 1;
  EXPECT_EQ(tl::sample_grid(m, 4, 4, tl::ScanKind::row_major, greedy), g);
}

TEST(Transformer, FirstTokenNllRespectsEntropyBound) {
  const TransformerConfig c = tiny(8);
  const Transformer m(c);
  const auto order = tl::ScanOrder::build(tl::ScanKind::row_major, 1, 4);
  std::vector<TokenSequence> seqs;
  for (int s = 0; s < 4; ++s) {
    tl::IndexGrid g(1, 4);
    g.values = {s, (s + 1) % 8, (s + 3) % 8, 7 - s};
    seqs.push_back(tl::make_sequence({}, g, order, c));
  }
  train(m, seqs, 200, 1e-2);
  tl::autograd::NoGradGuard ng;
  double first = 0;
  for (const auto& s : seqs) {
    const Tensor logits = m.forward(s);
    double mx = -INFINITY;
    for (int k = 0; k < 8; ++k) mx = std::max(mx, logits.data()[k]);
    double z = 0;
    for (int k = 0; k < 8; ++k) z += std::exp(logits.data()[k] - mx);
    first += -(logits.data()[static_cast<std::size_t>(s.tokens[1])] - mx - std::log(z));
  }
  EXPECT_GE(first / 4, std::log(4.0) - 1e-12);
  EXPECT_LT(first / 4, std::log(4.0) + 0.1);  // and training gets close to it
}

TEST(Transformer, ClassConditioningIsLive) {
  TransformerConfig c = tiny(8);
  c.num_classes = 2;
  const Transformer m(c);
  const auto order = tl::ScanOrder::build(tl::ScanKind::row_major, 2, 2);
  tl::IndexGrid ga(2, 2), gb(2, 2);
  ga.values = {1, 2, 3, 4};
  gb.values = {5, 6, 7, 0};
  tl::Condition ca, cb;
  ca.class_label = 0;
  cb.class_label = 1;
  const std::vector<TokenSequence> seqs{tl::make_sequence(ca, ga, order, c), tl::make_sequence(cb, gb, order, c)};
  train(m, seqs, 150, 1e-2);
  tl::SamplingParams greedy;
  greedy.top_k = 1;
  EXPECT_EQ(tl::sample_grid(m, 2, 2, tl::ScanKind::row_major, greedy, ca), ga);
  EXPECT_EQ(tl::sample_grid(m, 2, 2, tl::ScanKind::row_major, greedy, cb), gb);
}

TEST(MakeSequence, PrefixLayout) {
  TransformerConfig c;
  c.K = 1024;
  c.cond_vocab = 512;
  c.num_classes = 10;
  const auto order = tl::ScanOrder::build(tl::ScanKind::row_major, 16, 16);
  const tl::IndexGrid data(16, 16, 5);
  tl::Condition cls;
  cls.class_label = 3;
  const auto s1 = tl::make_sequence(cls, data, order, c);
  EXPECT_EQ(s1.prefix_len, 1);
  EXPECT_EQ(s1.tokens[0], 1024 + 512 + 3);
  tl::Condition sp;
  sp.spatial = tl::IndexGrid(16, 16, 9);
  const auto s2 = tl::make_sequence(sp, data, order, c);
  EXPECT_EQ(s2.tokens.size(), 512u);
  EXPECT_EQ(s2.tokens[0], 1024 + 9);
  EXPECT_EQ(s2.data().size(), 256u);
  const auto s3 = tl::make_sequence({}, data, order, c);
  EXPECT_EQ(s3.prefix_len, 1);
  EXPECT_EQ(s3.tokens[0], c.bos());
  EXPECT_EQ(s3.data_len(), 256);
  tl::Condition bad;
  bad.spatial = tl::IndexGrid(2, 2, 512);
  EXPECT_THROW(tl::make_sequence(bad, data, order, c), tl::ConfigError);
  bad = {};
  bad.class_label = 10;
  EXPECT_THROW(tl::make_sequence(bad, data, order, c), tl::ConfigError);
  EXPECT_THROW(tl::make_sequence({}, tl::IndexGrid(16, 16, 1024), order, c), tl::ConfigError);
}

TEST(MakeSequence, TextExportMarksPrefix) {
  TransformerConfig c = tiny(8);
  c.num_classes = 2;
  tl::Condition cls;
  cls.class_label = 1;
  tl::IndexGrid g(1, 3);
  g.values = {4, 0, 7};
  std::ostringstream ss;
  tl::write_sequence(ss, tl::make_sequence(cls, g, tl::ScanOrder::build(tl::ScanKind::row_major, 1, 3), c));
  EXPECT_EQ(ss.str(), "9 | 4 0 7\n");
}

TEST(Transformer, ContractErrors) {
  const Transformer m(tiny());
  const std::vector<int> long_seq(33, 0);
  EXPECT_THROW(m.forward(long_seq, 1), tl::ContractError);
  const std::vector<int> bad{0, 999};
  EXPECT_THROW(m.forward(bad, 1), tl::ContractError);
  TransformerConfig c = tiny();
  c.d_model = 15;
  EXPECT_THROW(c.validate(), tl::ConfigError);
}

}  // namespace
