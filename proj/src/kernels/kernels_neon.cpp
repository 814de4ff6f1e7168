// aarch64 NEON variant; vmulq + vaddq (no vfmaq) to keep the axpy family exact.
#include <arm_neon.h>

#include "tl/kernels.hpp"

namespace tl::kernels {
namespace {

inline float64x2_t madd(float64x2_t acc, float64x2_t a, float64x2_t b) {
  return vaddq_f64(acc, vmulq_f64(a, b));
}

inline void gemm_axpy_family(int64_t M, int64_t N, int64_t K, const double* A, int64_t ars,
                             int64_t aks, const double* B, int64_t ldb, double* C,
                             int64_t ldc) {
  int64_t j = 0;
  for (; j + 4 <= N; j += 4) {
    for (int64_t i = 0; i < M; ++i) {
      double* c = C + i * ldc + j;
      float64x2_t x0 = vld1q_f64(c), x1 = vld1q_f64(c + 2);
      for (int64_t k = 0; k < K; ++k) {
        const double* b = B + k * ldb + j;
        const float64x2_t av = vdupq_n_f64(A[i * ars + k * aks]);
        x0 = madd(x0, av, vld1q_f64(b));
        x1 = madd(x1, av, vld1q_f64(b + 2));
      }
      vst1q_f64(c, x0);
      vst1q_f64(c + 2, x1);
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
  float64x2_t acc = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) acc = madd(acc, vld1q_f64(a + i), vld1q_f64(b + i));
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemm_nt(int64_t M, int64_t N, int64_t K, const double* A, int64_t lda, const double* B,
             int64_t ldb, double* C, int64_t ldc) {
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) C[i * ldc + j] += dot(A + i * lda, B + j * ldb, K);
}

double squared_distance(const double* a, const double* b, int64_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc = madd(acc, d, d);
  }
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

void axpy(int64_t n, double a, const double* x, double* y) {
  const float64x2_t av = vdupq_n_f64(a);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, madd(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void add(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(int64_t n, double s, const double* x, double* out) {
  const float64x2_t sv = vdupq_n_f64(s);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(sv, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = s * x[i];
}

constexpr KernelTable kNeon{
    "neon", gemm_nn, gemm_nt, gemm_tn, dot, squared_distance, axpy, add, mul, scale,
};

}  // namespace

const KernelTable& neon_table_unchecked() { return kNeon; }

}  // namespace tl::kernels
