#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Inner-loop arithmetic kernels. Every variant implements the same table; the
// scalar table is the reference and the SIMD tables are checked against it.
//
// Kernels in the "axpy family" (gemm_nn, gemm_tn, axpy, add, mul, scale)
// accumulate each output element in the same order as the scalar reference and
// do not fuse multiply-add, so all variants agree bit for bit. Reductions
// (dot, squared_distance, gemm_nt) use lane-parallel partial sums and agree
// with the reference to rounding.
namespace tl::kernels {

struct KernelTable {
  const char* name;

  // C[M×N] += A[M×K] · B[K×N]; all row-major with explicit leading dims.
  void (*gemm_nn)(int64_t M, int64_t N, int64_t K, const double* A, int64_t lda,
                  const double* B, int64_t ldb, double* C, int64_t ldc);
  // C[M×N] += A[M×K] · B[N×K]ᵗ
  void (*gemm_nt)(int64_t M, int64_t N, int64_t K, const double* A, int64_t lda,
                  const double* B, int64_t ldb, double* C, int64_t ldc);
  // C[M×N] += A[K×M]ᵗ · B[K×N]
  void (*gemm_tn)(int64_t M, int64_t N, int64_t K, const double* A, int64_t lda,
                  const double* B, int64_t ldb, double* C, int64_t ldc);

  double (*dot)(const double* a, const double* b, int64_t n);
  double (*squared_distance)(const double* a, const double* b, int64_t n);

  // y += a·x
  void (*axpy)(int64_t n, double a, const double* x, double* y);
  void (*add)(int64_t n, const double* a, const double* b, double* out);
  void (*mul)(int64_t n, const double* a, const double* b, double* out);
  void (*scale)(int64_t n, double s, const double* x, double* out);
};

const KernelTable& scalar_table();
// nullptr when the variant is not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Table used by all tensor ops. Chosen once from the TL_KERNELS environment
// variable ("auto" default, "scalar", "avx2", "neon"), overridable with select().
const KernelTable& active();
void select(std::string_view name);
std::vector<std::string> available();

}  // namespace tl::kernels
