#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <sstream>

#include "tl/errors.hpp"
#include "tl/gradcheck.hpp"
#include "tl/ops.hpp"
#include "tl/serialize.hpp"
#include "primitive_cases.hpp"

namespace {

using tl::Shape;
using tl::Tensor;

Tensor randn(Shape shape, tl::Rng& rng, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(tl::shape_numel(shape)));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

// Central differences of f at x, computed independently of autograd.
std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double o = x[i];
    x[i] = o + h;
    const double up = f(x);
    x[i] = o - h;
    const double down = f(x);
    x[i] = o;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

TEST(Matmul, IdentityAndHandExamples) {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor p = tl::matmul(eye, m);
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), (std::vector<double>{1, 2, 3, 4}));
  const Tensor r = tl::matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  EXPECT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_EQ(r.item(), 11.0);
}

TEST(Matmul, GradientOfSumMatchesFrozenFiniteDifferenceValue) {
  const std::vector<double> bv{2, 3, 4, 5};
  // Oracle: finite differences of sum(a·b) w.r.t. a at a = I.
  auto f = [&](const std::vector<double>& a) {
    double s = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) s += a[i * 2 + k] * bv[k * 2 + j];
    return s;
  };
  const auto fd = numeric_grad(f, {1, 0, 0, 1});
  const std::vector<double> frozen{5, 9, 5, 9};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(fd[i], frozen[i], 1e-8);

  Tensor a = Tensor::from({2, 2}, {1, 0, 0, 1}, true);
  tl::autograd::backward(tl::sum(tl::matmul(a, Tensor::from({2, 2}, bv))));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(a.grad()[i], frozen[i]);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    tl::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const tl::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2×3]"), std::string::npos);
    EXPECT_NE(msg.find("by [2×3]"), std::string::npos);
  }
}

TEST(Conv2d, SumOfOnes) {
  const Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  EXPECT_EQ(tl::conv2d(x, k, {}, 1, 0).item(), 9.0);
  const Tensor y = tl::conv2d(x, k, {}, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  // Overlap counts: corners 4, edge centers 6, center 9.
  const std::vector<double> expected{4, 6, 4, 6, 9, 6, 4, 6, 4};
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), expected);
}

TEST(Conv2d, KernelGradientAgainstFiniteDifferences) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    tl::Rng rng(seed);
    const Tensor x = randn({1, 2, 4, 4}, rng);
    const Tensor w = randn({3, 2, 2, 2}, rng);
    const Tensor weights = randn({1, 3, 3, 3}, rng);
    const double err = tl::grad_check([&](const Tensor& k) { return tl::sum(tl::mul(tl::conv2d(x, k, {}, 1, 0), weights)); }, w);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(Conv2d, OutputSizeFloorsAndOversizedKernelThrows) {
  const Tensor x = Tensor::zeros({1, 1, 5, 5});
  EXPECT_EQ(tl::conv2d(x, Tensor::zeros({1, 1, 2, 2}), {}, 2, 0).shape(), (Shape{1, 1, 2, 2}));
  EXPECT_THROW(tl::conv2d(x, Tensor::zeros({1, 1, 8, 8}), {}, 1, 1), tl::ShapeError);
  EXPECT_THROW(tl::conv2d(x, Tensor::zeros({1, 2, 3, 3}), {}, 1, 1), tl::ShapeError);
}

TEST(Conv2d, UnitPointwiseKernelIsIdentity) {
  tl::Rng rng(1);
  const Tensor x = randn({2, 1, 5, 3}, rng);
  const Tensor y = tl::conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), {}, 1, 0);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), std::vector<double>(x.data().begin(), x.data().end()));
}

TEST(Softmax, ExamplesAndMaskSentinel) {
  const double inf = std::numeric_limits<double>::infinity();
  Tensor y = tl::softmax(Tensor::from({3}, {0, 0, 0}), 0);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  y = tl::softmax(Tensor::from({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
  EXPECT_NEAR(y.data()[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(y.data()[1], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(y.data()[2], 3.0 / 6.0, 1e-15);
  y = tl::softmax(Tensor::from({2}, {5, -inf}), 0);
  EXPECT_EQ(y.data()[0], 1.0);
  EXPECT_EQ(y.data()[1], 0.0);
  EXPECT_THROW(tl::softmax(Tensor::from({2}, {-inf, -inf}), 0), tl::NumericError);
}

TEST(Softmax, SumsToOneAlongEitherAxis) {
  tl::Rng rng(4);
  const Tensor x = randn({7, 9}, rng, 5.0);
  for (int axis : {0, 1}) {
    const Tensor y = tl::softmax(x, axis);
    const int64_t outer = axis == 0 ? 9 : 7, len = axis == 0 ? 7 : 9;
    for (int64_t o = 0; o < outer; ++o) {
      double s = 0;
      for (int64_t j = 0; j < len; ++j) s += axis == 0 ? y.data()[j * 9 + o] : y.data()[o * 9 + j];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Backward, SumAndPowerRule) {
  Tensor x = Tensor::from({2, 3}, {1, -2, 3, 0.5, 7, -1}, true);
  tl::autograd::backward(tl::sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);

  Tensor y = Tensor::from({3}, {1, 2, 3}, true);
  tl::autograd::backward(tl::sum(tl::square(y)));
  EXPECT_EQ(std::vector<double>(y.grad().begin(), y.grad().end()), (std::vector<double>{2, 4, 6}));
  EXPECT_EQ(tl::autograd::tape_size(), 0u);
}

TEST(Backward, AccumulatesAcrossCallsUntilZeroed) {
  Tensor y = Tensor::from({3}, {1, 2, 3}, true);
  tl::autograd::backward(tl::sum(tl::square(y)));
  tl::autograd::backward(tl::sum(tl::square(y)));
  EXPECT_EQ(std::vector<double>(y.grad().begin(), y.grad().end()), (std::vector<double>{4, 8, 12}));
  y.zero_grad();
  tl::autograd::backward(tl::sum(tl::square(y)));
  EXPECT_EQ(y.grad()[2], 6.0);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tensor x = Tensor::from({4}, {1, 2, 3, 4}, true);
  tl::autograd::backward(tl::sum(tl::add(x, x)));
  for (double g : x.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(tl::autograd::backward(tl::square(x)), tl::ContractError);
  tl::autograd::clear_tape();
  EXPECT_THROW(tl::autograd::backward(Tensor::scalar(1.0)), tl::ContractError);
}

TEST(Backward, IntermediateGradientsArePopulated) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor h = tl::scale(x, 3.0);
  tl::autograd::backward(tl::sum(tl::square(h)));
  ASSERT_TRUE(h.has_grad());
  EXPECT_EQ(h.grad()[1], 12.0);
  EXPECT_EQ(x.grad()[1], 36.0);
}

TEST(Backward, NoGradGuardSkipsRecording) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  tl::autograd::NoGradGuard guard;
  const Tensor y = tl::square(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_EQ(tl::autograd::tape_size(), 0u);
}

TEST(GradCheck, QuadraticIsExact) {
  tl::Rng rng(9);
  const double err = tl::grad_check([](const Tensor& x) { return tl::sum(tl::square(x)); }, randn({3, 4}, rng));
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, SoftmaxCrossEntropy) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    tl::Rng rng(seed);
    const std::vector<int> targets{3, 0, -1, 5, 2};
    const double err = tl::grad_check([&](const Tensor& x) { return tl::cross_entropy(x, targets); }, randn({5, 6}, rng, 2.0));
    EXPECT_LT(err, 1e-4);
  }
}

using tl::testing::PrimitiveCase;
using tl::testing::primitive_cases;

}  // namespace

namespace tl::testing {
void PrintTo(const PrimitiveCase& c, std::ostream* os) { *os << c.name; }
}  // namespace tl::testing

namespace {

// Every differentiable primitive against central differences at five seeds.
class PrimitiveGradients : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradients, MatchFiniteDifferences) {
  const PrimitiveCase& c = GetParam();
  for (uint64_t seed = 0; seed < 5; ++seed) {
    tl::Rng rng(100 + seed);
    const Tensor x = randn(c.input, rng);
    tl::Rng op_rng(seed);
    const Tensor probe = c.op(x, op_rng);
    tl::Rng wrng(seed + 1000);
    const Tensor weights = randn(probe.shape(), wrng);
    const double err = tl::grad_check(
        [&](const Tensor& in) {
          tl::Rng r(seed);
          return tl::sum(tl::mul(c.op(in, r), weights));
        },
        x);
    EXPECT_LT(err, 1e-4) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(TensorCore, PrimitiveGradients, ::testing::ValuesIn(primitive_cases()),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(Attention, SinglePositionReturnsValueRow) {
  const Tensor v = Tensor::from({1, 3}, {0.5, -2, 7});
  const Tensor y = tl::attention(Tensor::from({1, 2}, {1, 2}), Tensor::from({1, 2}, {3, 4}), v, 1, 1, true);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), std::vector<double>(v.data().begin(), v.data().end()));
}

TEST(Attention, EqualKeysGivePrefixMeans) {
  tl::Rng rng(2);
  const int64_t N = 5;
  const Tensor q = Tensor::full({N, 2}, 0.3);
  const Tensor v = randn({N, 3}, rng);
  const Tensor y = tl::attention(q, q, v, 1, 1, true);
  for (int64_t i = 0; i < N; ++i)
    for (int64_t c = 0; c < 3; ++c) {
      double m = 0;
      for (int64_t j = 0; j <= i; ++j) m += v.data()[j * 3 + c];
      EXPECT_NEAR(y.data()[i * 3 + c], m / static_cast<double>(i + 1), 1e-14);
    }
}

TEST(Attention, PerturbingValueAffectsOnlyLaterPositions) {
  tl::Rng rng(3);
  const Tensor q = randn({6, 4}, rng), k = randn({6, 4}, rng);
  std::vector<double> vv(24);
  for (double& x : vv) x = rng.normal();
  const Tensor y0 = tl::attention(q, k, Tensor::from({6, 4}, vv), 1, 2, true);
  vv[3 * 4 + 1] += 1.0;
  const Tensor y1 = tl::attention(q, k, Tensor::from({6, 4}, vv), 1, 2, true);
  for (int64_t i = 0; i < 6; ++i) {
    bool same = true;
    for (int64_t c = 0; c < 4; ++c) same = same && y0.data()[i * 4 + c] == y1.data()[i * 4 + c];
    EXPECT_EQ(same, i < 3) << "row " << i;
  }
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  tl::Rng rng(8);
  const Tensor x = randn({2, 3, 8, 8}, rng), w = randn({4, 3, 3, 3}, rng);
  const Tensor a = tl::group_norm(tl::conv2d(x, w, {}, 1, 1), 2, Tensor::full({4}, 1.0), Tensor::zeros({4}));
  const Tensor b = tl::group_norm(tl::conv2d(x, w, {}, 1, 1), 2, Tensor::full({4}, 1.0), Tensor::zeros({4}));
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)), 0);
}

TEST(Serialization, RoundTripsAndRejectsBadMagic) {
  tl::Rng rng(6);
  const Tensor t = randn({2, 3, 4}, rng);
  std::stringstream ss;
  tl::io::write_tensor(ss, t);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "TNSR");
  // magic + version + rank + 3 dims + dtype + payload
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 3 * 8 + 1 + 24 * 8);
  const Tensor back = tl::io::read_tensor(ss);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(std::memcmp(back.data().data(), t.data().data(), 24 * sizeof(double)), 0);

  std::stringstream s32;
  tl::io::write_tensor(s32, t, tl::io::DType::f32);
  const Tensor back32 = tl::io::read_tensor(s32);
  for (int i = 0; i < 24; ++i) EXPECT_NEAR(back32.data()[i], t.data()[i], 1e-6 * (1 + std::fabs(t.data()[i])));

  std::stringstream bad("XXXX");
  EXPECT_THROW(tl::io::read_tensor(bad), tl::IoError);
}

}  // namespace
