#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "tl/errors.hpp"
#include "tl/random.hpp"
#include "tl/scan_order.hpp"

namespace {

using tl::Cell;
using tl::IndexGrid;
using tl::ScanKind;
using tl::ScanOrder;

bool pow2(int64_t v) { return (v & (v - 1)) == 0; }

bool allowed(ScanKind k, int64_t h, int64_t w) {
  return !(k == ScanKind::z_curve || k == ScanKind::subsample) || (pow2(h) && pow2(w));
}

TEST(ScanOrder, RowMajor2x2) {
  const auto o = ScanOrder::build(ScanKind::row_major, 2, 2);
  EXPECT_EQ(o.perm(), (std::vector<Cell>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
}

TEST(ScanOrder, Alternate2x3) {
  const auto o = ScanOrder::build(ScanKind::alternate, 2, 3);
  EXPECT_EQ(o.perm(), (std::vector<Cell>{{0, 0}, {0, 1}, {0, 2}, {1, 2}, {1, 1}, {1, 0}}));
}

TEST(ScanOrder, ZCurvePositionOfOneOne) {
  const auto o = ScanOrder::build(ScanKind::z_curve, 4, 4);
  EXPECT_EQ(o.position(1, 1), 3);
  EXPECT_EQ(o.position(0, 1), 1);
  EXPECT_EQ(o.position(1, 0), 2);
  EXPECT_EQ(o.position(2, 0), 8);
}

TEST(ScanOrder, ZCurveMatchesHandInterleaving) {
  // Independent oracle: interleave 3 bits of each coordinate, column bit first.
  const auto o = ScanOrder::build(ScanKind::z_curve, 8, 8);
  for (int64_t r = 0; r < 8; ++r)
    for (int64_t c = 0; c < 8; ++c) {
      const int64_t expect = (c & 1) | ((r & 1) << 1) | ((c & 2) << 1) | ((r & 2) << 2) | ((c & 4) << 2) | ((r & 4) << 3);
      EXPECT_EQ(o.position(r, c), expect);
    }
}

TEST(ScanOrder, SpiralHandTraces) {
  EXPECT_EQ(ScanOrder::build(ScanKind::spiral_out, 3, 3).perm(),
            (std::vector<Cell>{{1, 1}, {1, 2}, {2, 2}, {2, 1}, {2, 0}, {1, 0}, {0, 0}, {0, 1}, {0, 2}}));
  EXPECT_EQ(ScanOrder::build(ScanKind::spiral_out, 4, 4).perm(),
            (std::vector<Cell>{{1, 1}, {1, 2}, {2, 2}, {2, 1}, {2, 0}, {1, 0}, {0, 0}, {0, 1},
                               {0, 2}, {0, 3}, {1, 3}, {2, 3}, {3, 3}, {3, 2}, {3, 1}, {3, 0}}));
  EXPECT_EQ(ScanOrder::build(ScanKind::spiral_out, 1, 3).perm(), (std::vector<Cell>{{0, 1}, {0, 2}, {0, 0}}));
}

TEST(ScanOrder, SpiralInReversesSpiralOut) {
  for (int64_t h = 1; h <= 8; ++h)
    for (int64_t w = 1; w <= 8; ++w) {
      auto out = ScanOrder::build(ScanKind::spiral_out, h, w).perm();
      std::reverse(out.begin(), out.end());
      EXPECT_EQ(ScanOrder::build(ScanKind::spiral_in, h, w).perm(), out) << h << "×" << w;
    }
}

TEST(ScanOrder, EveryKindIsABijection) {
  for (ScanKind k : tl::all_scan_kinds())
    for (int64_t h = 1; h <= 16; ++h)
      for (int64_t w = 1; w <= 16; ++w) {
        if (!allowed(k, h, w)) continue;
        const auto o = ScanOrder::build(k, h, w);
        ASSERT_EQ(o.size(), h * w);
        std::set<std::pair<int64_t, int64_t>> seen;
        for (int64_t t = 0; t < o.size(); ++t) {
          const Cell c = o.cell(t);
          ASSERT_TRUE(c.row >= 0 && c.row < h && c.col >= 0 && c.col < w);
          seen.insert({c.row, c.col});
          ASSERT_EQ(o.position(c.row, c.col), t);
        }
        EXPECT_EQ(static_cast<int64_t>(seen.size()), h * w) << tl::scan_kind_name(k) << ' ' << h << "×" << w;
      }
}

TEST(ScanOrder, SubsamplePrefixesAreStridedSubgrids) {
  for (int64_t h : {1, 2, 4, 8, 16})
    for (int64_t w : {1, 2, 4, 8, 16}) {
      const auto o = ScanOrder::build(ScanKind::subsample, h, w);
      for (int64_t s = 1; s <= std::min(h, w); s *= 2) {
        const int64_t n = (h / s) * (w / s);
        for (int64_t t = 0; t < n; ++t) {
          const Cell c = o.cell(t);
          ASSERT_EQ(c.row % s, 0);
          ASSERT_EQ(c.col % s, 0);
        }
      }
    }
}

TEST(ScanOrder, RowMajorAndAlternateAgreeOnEvenRows) {
  const auto a = ScanOrder::build(ScanKind::row_major, 5, 7);
  const auto b = ScanOrder::build(ScanKind::alternate, 5, 7);
  for (int64_t t = 0; t < 35; ++t) {
    if ((t / 7) % 2 == 0) {
      EXPECT_EQ(a.cell(t), b.cell(t));
    }
  }
}

TEST(ScanOrder, ZCurveQuadsAreTwoByTwoBlocks) {
  for (int64_t h : {2, 4, 8, 16})
    for (int64_t w : {2, 4, 8, 16}) {
      const auto o = ScanOrder::build(ScanKind::z_curve, h, w);
      for (int64_t t = 0; t < o.size(); t += 4) {
        const Cell a = o.cell(t);
        EXPECT_EQ(a.row % 2, 0);
        EXPECT_EQ(a.col % 2, 0);
        EXPECT_EQ(o.cell(t + 1), (Cell{a.row, a.col + 1}));
        EXPECT_EQ(o.cell(t + 2), (Cell{a.row + 1, a.col}));
        EXPECT_EQ(o.cell(t + 3), (Cell{a.row + 1, a.col + 1}));
      }
    }
}

TEST(ScanOrder, NonPowerOfTwoIsRefused) {
  try {
    ScanOrder::build(ScanKind::z_curve, 3, 4);
    FAIL();
  } catch (const tl::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("power-of-two"), std::string::npos);
  }
  EXPECT_THROW(ScanOrder::build(ScanKind::subsample, 4, 6), tl::ConfigError);
  EXPECT_THROW(tl::parse_scan_kind("hilbert"), tl::ConfigError);
  EXPECT_EQ(tl::parse_scan_kind("spiral_in"), ScanKind::spiral_in);
}

TEST(Flatten, Examples) {
  IndexGrid g(2, 2);
  g.values = {1, 2, 3, 4};
  const auto rm = ScanOrder::build(ScanKind::row_major, 2, 2);
  EXPECT_EQ(tl::flatten(g, rm), (std::vector<int>{1, 2, 3, 4}));
  const std::vector<int> seq{1, 2, 3, 4};
  EXPECT_EQ(tl::unflatten(seq, rm), g);
  EXPECT_EQ(tl::unflatten(seq, ScanOrder::build(ScanKind::z_curve, 2, 2)), g);
}

TEST(Flatten, ConstantGridGivesConstantSequence) {
  const IndexGrid g(4, 4, 7);
  for (ScanKind k : tl::all_scan_kinds())
    for (int v : tl::flatten(g, ScanOrder::build(k, 4, 4))) EXPECT_EQ(v, 7);
}

TEST(Flatten, RoundTripsUnderEveryOrder) {
  tl::Rng rng(11);
  for (int trial = 0; trial < 100; ++trial)
    for (ScanKind k : tl::all_scan_kinds()) {
      const int64_t h = int64_t{1} << rng.below(4), w = int64_t{1} << rng.below(4);
      IndexGrid g(h, w);
      for (int& v : g.values) v = static_cast<int>(rng.below(100));
      const auto o = ScanOrder::build(k, h, w);
      ASSERT_EQ(tl::unflatten(tl::flatten(g, o), o), g);
    }
}

TEST(Flatten, DimensionMismatchesAreContractErrors) {
  const auto o = ScanOrder::build(ScanKind::row_major, 2, 2);
  EXPECT_THROW(tl::flatten(IndexGrid(2, 3), o), tl::ContractError);
  const std::vector<int> three{1, 2, 3};
  EXPECT_THROW(tl::unflatten(three, o), tl::ContractError);
}

TEST(ScanOrder, PermExportsAsText) {
  std::ostringstream ss;
  tl::write_perm(ss, ScanOrder::build(ScanKind::alternate, 2, 2));
  EXPECT_EQ(ss.str(), "0 0 0\n1 0 1\n2 1 1\n3 1 0\n");
}

}  // namespace
