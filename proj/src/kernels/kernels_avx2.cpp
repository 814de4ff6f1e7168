// Compiled with -mavx2 only (no -mfma): products and sums are rounded separately so
// the axpy-family kernels reproduce the scalar reference exactly.
#include <immintrin.h>

#include "tl/kernels.hpp"

namespace tl::kernels {
namespace {

inline double hsum(__m256d v) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, v);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

inline __m256d madd(__m256d acc, __m256d a, __m256d b) {
  return _mm256_add_pd(acc, _mm256_mul_pd(a, b));
}

// Shared body for gemm_nn / gemm_tn: only the addressing of A differs.
// a_row(i) stride and a_k stride select A[i,k] = A[i*ars + k*aks].
inline void gemm_axpy_family(int64_t M, int64_t N, int64_t K, const double* A, int64_t ars,
                             int64_t aks, const double* B, int64_t ldb, double* C,
                             int64_t ldc) {
  int64_t j = 0;
  for (; j + 8 <= N; j += 8) {
    int64_t i = 0;
    for (; i + 4 <= M; i += 4) {
      double* c0 = C + (i + 0) * ldc + j;
      double* c1 = C + (i + 1) * ldc + j;
      double* c2 = C + (i + 2) * ldc + j;
      double* c3 = C + (i + 3) * ldc + j;
      __m256d c00 = _mm256_loadu_pd(c0), c01 = _mm256_loadu_pd(c0 + 4);
      __m256d c10 = _mm256_loadu_pd(c1), c11 = _mm256_loadu_pd(c1 + 4);
      __m256d c20 = _mm256_loadu_pd(c2), c21 = _mm256_loadu_pd(c2 + 4);
      __m256d c30 = _mm256_loadu_pd(c3), c31 = _mm256_loadu_pd(c3 + 4);
      const double* a = A + i * ars;
      for (int64_t k = 0; k < K; ++k) {
        const double* b = B + k * ldb + j;
        const __m256d b0 = _mm256_loadu_pd(b);
        const __m256d b1 = _mm256_loadu_pd(b + 4);
        const double* ak = a + k * aks;
        __m256d av = _mm256_broadcast_sd(ak);
        c00 = madd(c00, av, b0);
        c01 = madd(c01, av, b1);
        av = _mm256_broadcast_sd(ak + ars);
        c10 = madd(c10, av, b0);
        c11 = madd(c11, av, b1);
        av = _mm256_broadcast_sd(ak + 2 * ars);
        c20 = madd(c20, av, b0);
        c21 = madd(c21, av, b1);
        av = _mm256_broadcast_sd(ak + 3 * ars);
        c30 = madd(c30, av, b0);
        c31 = madd(c31, av, b1);
      }
      _mm256_storeu_pd(c0, c00);
      _mm256_storeu_pd(c0 + 4, c01);
      _mm256_storeu_pd(c1, c10);
      _mm256_storeu_pd(c1 + 4, c11);
      _mm256_storeu_pd(c2, c20);
      _mm256_storeu_pd(c2 + 4, c21);
      _mm256_storeu_pd(c3, c30);
      _mm256_storeu_pd(c3 + 4, c31);
    }
    for (; i < M; ++i) {
      double* c = C + i * ldc + j;
      __m256d x0 = _mm256_loadu_pd(c), x1 = _mm256_loadu_pd(c + 4);
      for (int64_t k = 0; k < K; ++k) {
        const double* b = B + k * ldb + j;
        const __m256d av = _mm256_broadcast_sd(A + i * ars + k * aks);
        x0 = madd(x0, av, _mm256_loadu_pd(b));
        x1 = madd(x1, av, _mm256_loadu_pd(b + 4));
      }
      _mm256_storeu_pd(c, x0);
      _mm256_storeu_pd(c + 4, x1);
    }
  }
  for (; j + 4 <= N; j += 4) {
    for (int64_t i = 0; i < M; ++i) {
      double* c = C + i * ldc + j;
      __m256d x0 = _mm256_loadu_pd(c);
      for (int64_t k = 0; k < K; ++k) {
        const __m256d av = _mm256_broadcast_sd(A + i * ars + k * aks);
        x0 = madd(x0, av, _mm256_loadu_pd(B + k * ldb + j));
      }
      _mm256_storeu_pd(c, x0);
    }
  }
  for (; j < N; ++j) {
    for (int64_t i = 0; i < M; ++i) {
      double acc = C[i * ldc + j];
      for (int64_t k = 0; k < K; ++k) acc += A[i * ars + k * aks] * B[k * ldb + j];
      C[i * ldc + j] = acc;
    }
  }
}

void gemm_nn(int64_t M, int64_t N, int64_t K, const double* A, int64_t lda, const double* B,
             int64_t ldb, double* C, int64_t ldc) {
  gemm_axpy_family(M, N, K, A, lda, 1, B, ldb, C, ldc);
}

void gemm_tn(int64_t M, int64_t N, int64_t K, const double* A, int64_t lda, const double* B,
             int64_t ldb, double* C, int64_t ldc) {
  gemm_axpy_family(M, N, K, A, 1, lda, B, ldb, C, ldc);
}

double dot(const double* a, const double* b, int64_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = madd(acc0, _mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc1 = madd(acc1, _mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = madd(acc0, _mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void gemm_nt(int64_t M, int64_t N, int64_t K, const double* A, int64_t lda, const double* B,
             int64_t ldb, double* C, int64_t ldc) {
  for (int64_t i = 0; i < M; ++i) {
    const double* a = A + i * lda;
    int64_t j = 0;
    for (; j + 4 <= N; j += 4) {
      const double* b0 = B + (j + 0) * ldb;
      const double* b1 = B + (j + 1) * ldb;
      const double* b2 = B + (j + 2) * ldb;
      const double* b3 = B + (j + 3) * ldb;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      int64_t k = 0;
      for (; k + 4 <= K; k += 4) {
        const __m256d av = _mm256_loadu_pd(a + k);
        s0 = madd(s0, av, _mm256_loadu_pd(b0 + k));
        s1 = madd(s1, av, _mm256_loadu_pd(b1 + k));
        s2 = madd(s2, av, _mm256_loadu_pd(b2 + k));
        s3 = madd(s3, av, _mm256_loadu_pd(b3 + k));
      }
      double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      for (; k < K; ++k) {
        r0 += a[k] * b0[k];
        r1 += a[k] * b1[k];
        r2 += a[k] * b2[k];
        r3 += a[k] * b3[k];
      }
      double* c = C + i * ldc + j;
      c[0] += r0;
      c[1] += r1;
      c[2] += r2;
      c[3] += r3;
    }
    for (; j < N; ++j) C[i * ldc + j] += dot(a, B + j * ldb, K);
  }
}

double squared_distance(const double* a, const double* b, int64_t n) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = madd(acc, d, d);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy(int64_t n, double a, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(a);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, madd(_mm256_loadu_pd(y + i), av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void add(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(int64_t n, double s, const double* x, double* out) {
  const __m256d sv = _mm256_set1_pd(s);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(sv, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = s * x[i];
}

constexpr KernelTable kAvx2{
    "avx2", gemm_nn, gemm_nt, gemm_tn, dot, squared_distance, axpy, add, mul, scale,
};

}  // namespace

const KernelTable& avx2_table_unchecked() { return kAvx2; }

}  // namespace tl::kernels
