// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_GEMM_HPP_
#define CDSE_GEMM_HPP_

namespace cdse {

// Row-major C[m x n] = alpha * op(A) * op(B) + beta * C.
// Backed by BLAS when built with CDSE_USE_BLAS, otherwise a plain loop nest.
// BLAS is pinned to one thread so results are reproducible run to run.
void Gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);
void Gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

}  // namespace cdse

#endif  // CDSE_GEMM_HPP_
