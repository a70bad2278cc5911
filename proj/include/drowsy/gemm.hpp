#pragma once

#include <algorithm>
#include <cstddef>

namespace drowsy {

// Deterministic dense kernels: accumulation order is fixed by the loop
// structure, never by data or thread count, so repeated runs are
// bit-identical. All matrices are row-major.

namespace detail {

constexpr std::size_t kGemmKBlock = 256;
constexpr std::size_t kGemmNBlock = 1024;
constexpr std::size_t kDotBlock = 4096;

/// Eight-lane dot product; lane split is fixed so the result is
/// reproducible and the loop vectorizes without reassociation licenses.
inline double dot8(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  std::size_t p = 0;
  for (; p + 8 <= n; p += 8) {
    s0 += a[p + 0] * b[p + 0];
    s1 += a[p + 1] * b[p + 1];
    s2 += a[p + 2] * b[p + 2];
    s3 += a[p + 3] * b[p + 3];
    s4 += a[p + 4] * b[p + 4];
    s5 += a[p + 5] * b[p + 5];
    s6 += a[p + 6] * b[p + 6];
    s7 += a[p + 7] * b[p + 7];
  }
  double tail = 0;
  for (; p < n; ++p) tail += a[p] * b[p];
  return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

}  // namespace detail

/// C[M,N] += A[M,K] * B[K,N].
inline void gemm_nn_acc(std::size_t M, std::size_t N, std::size_t K,
                        const double* A, std::size_t lda,
                        const double* B, std::size_t ldb,
                        double* C, std::size_t ldc) {
  using namespace detail;
  for (std::size_t jj = 0; jj < N; jj += kGemmNBlock) {
    const std::size_t jend = std::min(N, jj + kGemmNBlock);
    const std::size_t jn = jend - jj;
    for (std::size_t kk = 0; kk < K; kk += kGemmKBlock) {
      const std::size_t kend = std::min(K, kk + kGemmKBlock);
      std::size_t i = 0;
      for (; i + 4 <= M; i += 4) {
        double* c0 = C + (i + 0) * ldc + jj;
        double* c1 = C + (i + 1) * ldc + jj;
        double* c2 = C + (i + 2) * ldc + jj;
        double* c3 = C + (i + 3) * ldc + jj;
        for (std::size_t k = kk; k < kend; ++k) {
          const double a0 = A[(i + 0) * lda + k];
          const double a1 = A[(i + 1) * lda + k];
          const double a2 = A[(i + 2) * lda + k];
          const double a3 = A[(i + 3) * lda + k];
          const double* b = B + k * ldb + jj;
          for (std::size_t j = 0; j < jn; ++j) {
            c0[j] += a0 * b[j];
            c1[j] += a1 * b[j];
            c2[j] += a2 * b[j];
            c3[j] += a3 * b[j];
          }
        }
      }
      for (; i < M; ++i) {
        double* c0 = C + i * ldc + jj;
        for (std::size_t k = kk; k < kend; ++k) {
          const double a0 = A[i * lda + k];
          const double* b = B + k * ldb + jj;
          for (std::size_t j = 0; j < jn; ++j) c0[j] += a0 * b[j];
        }
      }
    }
  }
}

/// C[M,N] += A[M,P] * B^T where B is [N,P].
inline void gemm_nt_acc(std::size_t M, std::size_t N, std::size_t P,
                        const double* A, std::size_t lda,
                        const double* B, std::size_t ldb,
                        double* C, std::size_t ldc) {
  using namespace detail;
  for (std::size_t pp = 0; pp < P; pp += kDotBlock) {
    const std::size_t pn = std::min(P, pp + kDotBlock) - pp;
    for (std::size_t i = 0; i < M; ++i) {
      const double* a = A + i * lda + pp;
      for (std::size_t n = 0; n < N; ++n)
        C[i * ldc + n] += dot8(a, B + n * ldb + pp, pn);
    }
  }
}

/// y[M] += A[M,N] * x[N].
inline void gemv_acc(std::size_t M, std::size_t N,
                     const double* A, std::size_t lda,
                     const double* x, double* y) {
  for (std::size_t i = 0; i < M; ++i) y[i] += detail::dot8(A + i * lda, x, N);
}

/// dst[N,M] = src[M,N].
inline void transpose(std::size_t M, std::size_t N, const double* src, double* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t ii = 0; ii < M; ii += kTile)
    for (std::size_t jj = 0; jj < N; jj += kTile) {
      const std::size_t iend = std::min(M, ii + kTile);
      const std::size_t jend = std::min(N, jj + kTile);
      for (std::size_t i = ii; i < iend; ++i)
        for (std::size_t j = jj; j < jend; ++j) dst[j * M + i] = src[i * N + j];
    }
}

}  // namespace drowsy
