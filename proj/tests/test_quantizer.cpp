#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "tl/errors.hpp"
#include "tl/ops.hpp"
#include "tl/quantizer.hpp"

namespace {

using tl::Codebook;
using tl::IndexGrid;
using tl::Tensor;

Tensor randn(tl::Shape shape, tl::Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(tl::shape_numel(shape)));
  for (double& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

// Exhaustive nearest entry by explicit squared distances (lowest index on ties).
int brute_nearest(const double* z, const std::vector<double>& entries, int64_t K, int64_t d) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int64_t k = 0; k < K; ++k) {
    double s = 0;
    for (int64_t i = 0; i < d; ++i) s += (z[i] - entries[k * d + i]) * (z[i] - entries[k * d + i]);
    if (s < best_d) {
      best_d = s;
      best = static_cast<int>(k);
    }
  }
  return best;
}

TEST(Quantize, PicksNearestEntry) {
  const Codebook cb(Tensor::from({2, 2}, {0, 0, 1, 1}, true));
  const auto q = tl::quantize(Tensor::from({1, 1, 2}, {0.2, 0.1}), cb);
  // d² = 0.05 to entry 0, 1.45 to entry 1.
  EXPECT_EQ(tl::indices_of(q).at(0, 0), 0);
  EXPECT_EQ(q.z_q.data()[0], 0.0);
  EXPECT_EQ(q.z_q.data()[1], 0.0);
}

TEST(Quantize, ExactMatchHasZeroLoss) {
  const Codebook cb(Tensor::from({3, 2}, {0, 0, 1, 1, -2, 0.5}, true));
  const auto q = tl::quantize(Tensor::from({1, 1, 2}, {-2, 0.5}), cb);
  EXPECT_EQ(tl::indices_of(q).at(0, 0), 2);
  EXPECT_EQ(q.codebook_loss.item(), 0.0);
  EXPECT_EQ(q.commitment_loss.item(), 0.0);
}

TEST(Quantize, DuplicateEntriesBreakTiesTowardLowestIndex) {
  const Codebook cb(Tensor::from({2, 1}, {0, 0}, true));
  tl::Rng rng(1);
  const auto q = tl::quantize(randn({3, 4, 1}, rng), cb);
  for (int v : tl::indices_of(q).values) EXPECT_EQ(v, 0);
}

TEST(Quantize, ConstructedDistancesSelectLastEntry) {
  // Entries at distances 3, 2, 1, 0 from ẑ = [0.5].
  const Codebook cb(Tensor::from({4, 1}, {3.5, 2.5, 1.5, 0.5}, true));
  const auto q = tl::quantize(Tensor::from({1, 1, 1}, {0.5}), cb);
  EXPECT_EQ(tl::indices_of(q), IndexGrid(1, 1, 3));
}

TEST(Quantize, IdenticalRowsGetIdenticalIndices) {
  tl::Rng rng(2);
  const Codebook cb(8, 3, rng);
  std::vector<double> z;
  const std::vector<double> row{0.01, -0.05, 0.02, 0.3, 0.1, -0.2};  // two cells per row
  for (int r = 0; r < 4; ++r) z.insert(z.end(), row.begin(), row.end());
  const auto q = tl::quantize(Tensor::from({4, 2, 3}, z), cb);
  const IndexGrid& g = tl::indices_of(q);
  for (int r = 1; r < 4; ++r)
    for (int c = 0; c < 2; ++c) EXPECT_EQ(g.at(r, c), g.at(0, c));
}

TEST(Quantize, MatchesBruteForceOnRandomInstances) {
  tl::Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t K = 1 + rng.below(32), d = 1 + rng.below(6), h = 1 + rng.below(4), w = 1 + rng.below(4);
    const Codebook cb(randn({K, d}, rng));
    const Tensor z = randn({h, w, d}, rng);
    const auto q = tl::quantize(z, cb);
    std::vector<double> e(cb.entries().data().begin(), cb.entries().data().end());
    for (int64_t p = 0; p < h * w; ++p)
      ASSERT_EQ(tl::indices_of(q).values[static_cast<std::size_t>(p)], brute_nearest(z.data().data() + p * d, e, K, d));
  }
}

TEST(Quantize, IdempotentOnItsOwnOutput) {
  tl::Rng rng(4);
  const Codebook cb(16, 4, rng);
  const auto q1 = tl::quantize(randn({2, 3, 3, 4}, rng), cb);
  const auto q2 = tl::quantize(q1.z_q, cb);
  EXPECT_EQ(q1.indices, q2.indices);
  EXPECT_EQ(std::memcmp(q1.z_q.data().data(), q2.z_q.data().data(), q1.z_q.data().size() * sizeof(double)), 0);
  EXPECT_EQ(q2.codebook_loss.item(), 0.0);
  EXPECT_EQ(q2.commitment_loss.item(), 0.0);
}

TEST(Quantize, CodebookAndCommitmentLossesAgreeInValue) {
  tl::Rng rng(5);
  const Codebook cb(8, 3, rng);
  const auto q = tl::quantize(randn({4, 4, 3}, rng), cb);
  EXPECT_EQ(q.codebook_loss.item(), q.commitment_loss.item());
  EXPECT_GT(q.codebook_loss.item(), 0.0);
}

TEST(Quantize, LossGradientsRouteThroughStopGradients) {
  tl::Rng rng(6);
  Codebook cb(4, 2, rng);
  Tensor z = randn({2, 2, 2}, rng).set_requires_grad(true);
  const auto q = tl::quantize(z, cb);
  tl::autograd::backward(q.codebook_loss);
  EXPECT_FALSE(z.has_grad());  // sg[ẑ] in the codebook term
  EXPECT_TRUE(cb.entries().has_grad());
  cb.entries().zero_grad();
  const auto q2 = tl::quantize(z, cb);
  tl::autograd::backward(q2.commitment_loss);
  EXPECT_TRUE(z.has_grad());
  for (double g : cb.entries().grad()) EXPECT_EQ(g, 0.0);  // sg[z_q] in the commitment term
}

TEST(Quantize, Errors) {
  tl::Rng rng(7);
  EXPECT_THROW(Codebook(0, 2, rng), tl::ContractError);
  const Codebook cb(4, 2, rng);
  EXPECT_THROW(tl::quantize(Tensor::zeros({2, 2, 3}), cb), tl::ShapeError);
  EXPECT_THROW(tl::quantize(Tensor::from({1, 1, 2}, {0.0, std::nan("")}), cb), tl::NumericError);
}

TEST(Lookup, GathersEntries) {
  const Codebook cb(Tensor::from({2, 1}, {5, 7}, true));
  IndexGrid s(1, 2);
  s.values = {0, 1};
  const Tensor z = tl::lookup(s, cb);
  EXPECT_EQ(z.shape(), (tl::Shape{1, 2, 1}));
  EXPECT_EQ(z.data()[0], 5.0);
  EXPECT_EQ(z.data()[1], 7.0);
  s.values[1] = 2;
  EXPECT_THROW(tl::lookup(s, cb), tl::ContractError);
}

TEST(Lookup, InvertsQuantizeBitExactly) {
  tl::Rng rng(8);
  const Codebook cb(10, 3, rng);
  const auto q = tl::quantize(randn({3, 2, 5, 3}, rng), cb);
  const Tensor back = tl::lookup(q.indices, cb);
  EXPECT_EQ(back.shape(), q.z_q.shape());
  EXPECT_EQ(std::memcmp(back.data().data(), q.z_q.data().data(), back.data().size() * sizeof(double)), 0);
  const Tensor single = tl::lookup(tl::indices_of(q, 1), cb);
  EXPECT_EQ(std::memcmp(single.data().data(), q.z_q.data().data() + 10 * 3, 30 * sizeof(double)), 0);
}

TEST(Lookup, GradientCountsOccurrences) {
  IndexGrid s(2, 3);
  s.values = {0, 2, 2, 1, 2, 0};
  std::vector<double> e{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  // Finite-difference oracle of sum(lookup(s, E)).
  auto f = [&](const std::vector<double>& ev) {
    double total = 0;
    for (int v : s.values) total += ev[v * 2] + ev[v * 2 + 1];
    return total;
  };
  std::vector<double> fd(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    auto up = e, down = e;
    up[i] += 1e-5;
    down[i] -= 1e-5;
    fd[i] = (f(up) - f(down)) / 2e-5;
  }
  Codebook cb(Tensor::from({3, 2}, e, true));
  tl::autograd::backward(tl::sum(tl::lookup(s, cb)));
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(cb.entries().grad()[i], fd[i], 1e-8);
  EXPECT_EQ(cb.entries().grad()[4], 3.0);
}

TEST(StraightThrough, ForwardIsZqAndGradientPassesUnchanged) {
  tl::Rng rng(9);
  Tensor z_hat = randn({2, 2, 3}, rng).set_requires_grad(true);
  const Codebook cb(6, 3, rng);
  const auto q = tl::quantize(z_hat, cb);
  const Tensor out = tl::straight_through(z_hat, q.z_q);
  EXPECT_EQ(std::memcmp(out.data().data(), q.z_q.data().data(), out.data().size() * sizeof(double)), 0);

  // Decoder = identity, loss = ‖x − out‖² ⇒ ∂L/∂ẑ = 2(z_q − x).
  const Tensor x = randn({2, 2, 3}, rng);
  tl::autograd::backward(tl::sum(tl::square(tl::sub(x, out))));
  for (std::size_t i = 0; i < x.data().size(); ++i)
    EXPECT_DOUBLE_EQ(z_hat.grad()[i], 2.0 * (q.z_q.data()[i] - x.data()[i]));
  for (double g : cb.entries().grad()) EXPECT_EQ(g, 0.0);
}

TEST(StraightThrough, ShapeMismatchIsContractError) {
  EXPECT_THROW(tl::straight_through(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), tl::ContractError);
}

TEST(VqLoss, TermsCombine) {
  const Codebook cb(Tensor::from({2, 1}, {0, 1}, true));
  // Perfect reconstruction, ẑ on the codebook → 0.
  const auto q0 = tl::quantize(Tensor::from({1, 1, 1}, {1.0}), cb);
  const Tensor img = Tensor::from({1, 1, 1, 1}, {0.25});
  EXPECT_EQ(tl::vq_loss(img, img, q0, 0.25, tl::squared_error_loss).item(), 0.0);
  // x = 0, x̂ = 1 with zero quantization terms → 1.
  EXPECT_EQ(tl::vq_loss(Tensor::scalar(0.0), Tensor::scalar(1.0), q0, 0.25, tl::squared_error_loss).item(), 1.0);
  // β = 0 drops the commitment term.
  const auto q1 = tl::quantize(Tensor::from({1, 1, 1}, {0.3}), cb);
  const double l0 = tl::vq_loss(img, img, q1, 0.0, tl::squared_error_loss).item();
  EXPECT_DOUBLE_EQ(l0, q1.codebook_loss.item());
  EXPECT_DOUBLE_EQ(tl::vq_loss(img, img, q1, 0.25, tl::squared_error_loss).item(), l0 + 0.25 * q1.commitment_loss.item());
  EXPECT_THROW(tl::vq_loss(img, img, q1, -1.0, tl::squared_error_loss), tl::ConfigError);
}

TEST(IndexGridText, RoundTripsWithHeader) {
  IndexGrid g(2, 3);
  g.values = {0, 5, 2, 7, 1, 1};
  std::stringstream ss;
  tl::write_index_grid(ss, g, 8);
  EXPECT_EQ(ss.str(), "2 3 8\n0 5 2\n7 1 1\n");
  int64_t K = 0;
  EXPECT_EQ(tl::read_index_grid(ss, &K), g);
  EXPECT_EQ(K, 8);
  std::stringstream bad("1 1 2\n5\n");
  EXPECT_THROW(tl::read_index_grid(bad), tl::IoError);
}

TEST(CodeUsage, CountsAndReseeds) {
  tl::Rng rng(10);
  Codebook cb(4, 2, rng);
  IndexGrid g(1, 3);
  g.values = {0, 0, 2};
  const auto usage = tl::code_usage(std::span<const IndexGrid>(&g, 1), 4);
  EXPECT_EQ(usage, (std::vector<int64_t>{2, 0, 1, 0}));
  const Tensor rows = Tensor::from({2, 2}, {9, 9, 9, 9});
  EXPECT_EQ(tl::reseed_unused_codes(cb, usage, rows, rng), 2);
  EXPECT_EQ(cb.entries().data()[2], 9.0);
  EXPECT_EQ(cb.entries().data()[6], 9.0);
  EXPECT_NE(cb.entries().data()[0], 9.0);
}

}  // namespace
