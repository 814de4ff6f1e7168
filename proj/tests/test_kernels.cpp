#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "tl/kernels.hpp"
#include "tl/random.hpp"

namespace {

using tl::kernels::KernelTable;

std::vector<double> random_vec(std::size_t n, tl::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<const KernelTable*> simd_tables() {
  std::vector<const KernelTable*> out;
  if (auto* t = tl::kernels::avx2_table()) out.push_back(t);
  if (auto* t = tl::kernels::neon_table()) out.push_back(t);
  return out;
}

const int64_t kSizes[] = {1, 3, 4, 5, 8, 9, 13, 17, 33};

TEST(Kernels, ScalarAlwaysAvailable) {
  const auto names = tl::kernels::available();
  ASSERT_FALSE(names.empty());
  EXPECT_EQ(names.front(), "scalar");
  EXPECT_STREQ(tl::kernels::scalar_table().name, "scalar");
}

TEST(Kernels, SelectUnknownVariantThrows) { EXPECT_ANY_THROW(tl::kernels::select("sse9")); }

TEST(Kernels, AxpyFamilyGemmIsBitIdenticalToScalar) {
  const auto& ref = tl::kernels::scalar_table();
  tl::Rng rng(7);
  for (const KernelTable* simd : simd_tables()) {
    for (int64_t M : kSizes)
      for (int64_t N : kSizes)
        for (int64_t K : {1, 4, 7, 16}) {
          // Padded leading dims exercise the stride arguments.
          const int64_t lda = K + 2, ldb = N + 3, ldc = N + 1;
          const auto A = random_vec(static_cast<std::size_t>(M * lda), rng);
          const auto B = random_vec(static_cast<std::size_t>(K * ldb), rng);
          const auto C0 = random_vec(static_cast<std::size_t>(M * ldc), rng);
          auto c_ref = C0, c_simd = C0;
          ref.gemm_nn(M, N, K, A.data(), lda, B.data(), ldb, c_ref.data(), ldc);
          simd->gemm_nn(M, N, K, A.data(), lda, B.data(), ldb, c_simd.data(), ldc);
          ASSERT_TRUE(bit_equal(c_ref, c_simd)) << simd->name << " gemm_nn " << M << "x" << N << "x" << K;

          const int64_t lda_t = M + 2;
          const auto At = random_vec(static_cast<std::size_t>(K * lda_t), rng);
          c_ref = C0;
          c_simd = C0;
          ref.gemm_tn(M, N, K, At.data(), lda_t, B.data(), ldb, c_ref.data(), ldc);
          simd->gemm_tn(M, N, K, At.data(), lda_t, B.data(), ldb, c_simd.data(), ldc);
          ASSERT_TRUE(bit_equal(c_ref, c_simd)) << simd->name << " gemm_tn " << M << "x" << N << "x" << K;
        }
  }
}

TEST(Kernels, ReductionKernelsMatchScalarToRounding) {
  const auto& ref = tl::kernels::scalar_table();
  tl::Rng rng(11);
  for (const KernelTable* simd : simd_tables()) {
    for (int64_t M : kSizes)
      for (int64_t N : kSizes)
        for (int64_t K : {1, 3, 4, 9, 31, 64}) {
          const auto A = random_vec(static_cast<std::size_t>(M * K), rng);
          const auto B = random_vec(static_cast<std::size_t>(N * K), rng);
          std::vector<double> c_ref(static_cast<std::size_t>(M * N), 0.5), c_simd = c_ref;
          ref.gemm_nt(M, N, K, A.data(), K, B.data(), K, c_ref.data(), N);
          simd->gemm_nt(M, N, K, A.data(), K, B.data(), K, c_simd.data(), N);
          for (std::size_t i = 0; i < c_ref.size(); ++i)
            ASSERT_NEAR(c_ref[i], c_simd[i], 1e-12 * (1.0 + std::fabs(c_ref[i]))) << simd->name << " gemm_nt";
        }
    for (int64_t n = 1; n < 70; ++n) {
      const auto a = random_vec(static_cast<std::size_t>(n), rng);
      const auto b = random_vec(static_cast<std::size_t>(n), rng);
      const double d0 = ref.dot(a.data(), b.data(), n), d1 = simd->dot(a.data(), b.data(), n);
      EXPECT_NEAR(d0, d1, 1e-12 * (1.0 + std::fabs(d0)));
      const double s0 = ref.squared_distance(a.data(), b.data(), n);
      const double s1 = simd->squared_distance(a.data(), b.data(), n);
      EXPECT_NEAR(s0, s1, 1e-12 * (1.0 + s0));
    }
  }
}

TEST(Kernels, ElementwiseKernelsAreBitIdentical) {
  const auto& ref = tl::kernels::scalar_table();
  tl::Rng rng(3);
  for (const KernelTable* simd : simd_tables()) {
    for (int64_t n = 1; n < 40; ++n) {
      const auto a = random_vec(static_cast<std::size_t>(n), rng);
      const auto b = random_vec(static_cast<std::size_t>(n), rng);
      std::vector<double> r0(static_cast<std::size_t>(n)), r1(r0);
      ref.add(n, a.data(), b.data(), r0.data());
      simd->add(n, a.data(), b.data(), r1.data());
      EXPECT_TRUE(bit_equal(r0, r1));
      ref.mul(n, a.data(), b.data(), r0.data());
      simd->mul(n, a.data(), b.data(), r1.data());
      EXPECT_TRUE(bit_equal(r0, r1));
      ref.scale(n, 0.37, a.data(), r0.data());
      simd->scale(n, 0.37, a.data(), r1.data());
      EXPECT_TRUE(bit_equal(r0, r1));
      r0 = b;
      r1 = b;
      ref.axpy(n, -1.3, a.data(), r0.data());
      simd->axpy(n, -1.3, a.data(), r1.data());
      EXPECT_TRUE(bit_equal(r0, r1));
    }
  }
}

TEST(Kernels, ScalarGemmMatchesNaiveTripleLoop) {
  tl::Rng rng(5);
  const int64_t M = 5, N = 6, K = 7;
  const auto A = random_vec(M * K, rng);
  const auto B = random_vec(K * N, rng);
  std::vector<double> C(M * N, 0.0);
  tl::kernels::scalar_table().gemm_nn(M, N, K, A.data(), K, B.data(), N, C.data(), N);
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < K; ++k) s += A[i * K + k] * B[k * N + j];
      EXPECT_NEAR(C[i * N + j], s, 1e-13);
    }
}

}  // namespace
