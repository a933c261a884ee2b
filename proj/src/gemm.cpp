// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cdse/gemm.hpp"

#ifdef CDSE_USE_BLAS

#include <cblas.h>

#include <mutex>

extern "C" void openblas_set_num_threads(int);

namespace cdse {
namespace {
std::once_flag g_blas_init;
void InitBlas() {
  std::call_once(g_blas_init, [] { openblas_set_num_threads(1); });
}
}  // namespace

void Gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  InitBlas();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

void Gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  InitBlas();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace cdse

#else  // !CDSE_USE_BLAS

namespace cdse {
namespace {

template <typename T>
void GemmImpl(bool trans_a, bool trans_b, int m, int n, int k, T alpha,
              const T* a, int lda, const T* b, int ldb, T beta, T* c,
              int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<long>(i) * ldc;
    if (beta == T(0)) {
      for (int j = 0; j < n; ++j) crow[j] = T(0);
    } else {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (int p = 0; p < k; ++p) {
      const T av = alpha * (trans_a ? a[static_cast<long>(p) * lda + i]
                                    : a[static_cast<long>(i) * lda + p]);
      if (av == T(0)) continue;
      if (!trans_b) {
        const T* brow = b + static_cast<long>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (int j = 0; j < n; ++j)
          crow[j] += av * b[static_cast<long>(j) * ldb + p];
      }
    }
  }
}

}  // namespace

void Gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  GemmImpl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void Gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  GemmImpl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace cdse

#endif  // CDSE_USE_BLAS
