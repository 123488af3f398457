// AVX2 + FMA variants.  This translation unit is compiled with -mavx2 -mfma;
// callers must go through the dispatch table, which checks CPU support first.
#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include "intervene/simd/kernels.hpp"

namespace intervene::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double reduce_sum_avx2(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double weighted_sqdist_avx2(const double* a, const double* b, const double* w,
                            std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(_mm256_mul_pd(d, d), _mm256_loadu_pd(w + i), acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += w[i] * d * d;
  }
  return s;
}

void ard_accumulate_avx2(double* acc, const double* col, double q,
                         double inv_l2, std::size_t n) {
  const __m256d qv = _mm256_set1_pd(q);
  const __m256d wv = _mm256_set1_pd(inv_l2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(qv, _mm256_loadu_pd(col + i));
    const __m256d a = _mm256_loadu_pd(acc + i);
    _mm256_storeu_pd(acc + i, _mm256_fmadd_pd(_mm256_mul_pd(d, d), wv, a));
  }
  for (; i < n; ++i) {
    const double d = q - col[i];
    acc[i] += inv_l2 * d * d;
  }
}

void axpy_avx2(double* out, double w, const double* col, std::size_t n) {
  const __m256d wv = _mm256_set1_pd(w);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d o = _mm256_loadu_pd(out + i);
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(wv, _mm256_loadu_pd(col + i), o));
  }
  for (; i < n; ++i) out[i] += w * col[i];
}

}  // namespace

const Ops* avx2_table_raw() {
  static const Ops ops = {"avx2",      reduce_sum_avx2,     dot_avx2,
                          weighted_sqdist_avx2, ard_accumulate_avx2, axpy_avx2};
  return &ops;
}

}  // namespace intervene::simd

#endif  // x86
