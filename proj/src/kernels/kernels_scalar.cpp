#include "tl/kernels.hpp"

namespace tl::kernels {
namespace {

void gemm_nn(int64_t M, int64_t N, int64_t K, const double* A, int64_t lda, const double* B,
             int64_t ldb, double* C, int64_t ldc) {
  for (int64_t i = 0; i < M; ++i) {
    double* c = C + i * ldc;
    for (int64_t k = 0; k < K; ++k) {
      const double a = A[i * lda + k];
      const double* b = B + k * ldb;
      for (int64_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

void gemm_nt(int64_t M, int64_t N, int64_t K, const double* A, int64_t lda, const double* B,
             int64_t ldb, double* C, int64_t ldc) {
  for (int64_t i = 0; i < M; ++i) {
    const double* a = A + i * lda;
    for (int64_t j = 0; j < N; ++j) {
      const double* b = B + j * ldb;
      double acc = 0.0;
      for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
      C[i * ldc + j] += acc;
    }
  }
}

void gemm_tn(int64_t M, int64_t N, int64_t K, const double* A, int64_t lda, const double* B,
             int64_t ldb, double* C, int64_t ldc) {
  for (int64_t k = 0; k < K; ++k) {
    const double* b = B + k * ldb;
    for (int64_t i = 0; i < M; ++i) {
      const double a = A[k * lda + i];
      double* c = C + i * ldc;
      for (int64_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

double dot(const double* a, const double* b, int64_t n) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_distance(const double* a, const double* b, int64_t n) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void axpy(int64_t n, double a, const double* x, double* y) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add(int64_t n, const double* a, const double* b, double* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(int64_t n, const double* a, const double* b, double* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(int64_t n, double s, const double* x, double* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = s * x[i];
}

constexpr KernelTable kScalar{
    "scalar", gemm_nn, gemm_nt, gemm_tn, dot, squared_distance, axpy, add, mul, scale,
};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace tl::kernels
