// NEON variants for aarch64, where 128-bit vectors are baseline.
#if defined(__aarch64__)

#include <arm_neon.h>

#include "intervene/simd/kernels.hpp"

namespace intervene::simd {
namespace {

double reduce_sum_neon(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double weighted_sqdist_neon(const double* a, const double* b, const double* w,
                            std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc = vfmaq_f64(acc, vmulq_f64(d, d), vld1q_f64(w + i));
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += w[i] * d * d;
  }
  return s;
}

void ard_accumulate_neon(double* acc, const double* col, double q,
                         double inv_l2, std::size_t n) {
  const float64x2_t qv = vdupq_n_f64(q);
  const float64x2_t wv = vdupq_n_f64(inv_l2);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(qv, vld1q_f64(col + i));
    vst1q_f64(acc + i, vfmaq_f64(vld1q_f64(acc + i), vmulq_f64(d, d), wv));
  }
  for (; i < n; ++i) {
    const double d = q - col[i];
    acc[i] += inv_l2 * d * d;
  }
}

void axpy_neon(double* out, double w, const double* col, std::size_t n) {
  const float64x2_t wv = vdupq_n_f64(w);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vfmaq_f64(vld1q_f64(out + i), wv, vld1q_f64(col + i)));
  for (; i < n; ++i) out[i] += w * col[i];
}

}  // namespace

const Ops* neon_table_raw() {
  static const Ops ops = {"neon",      reduce_sum_neon,     dot_neon,
                          weighted_sqdist_neon, ard_accumulate_neon, axpy_neon};
  return &ops;
}

}  // namespace intervene::simd

#endif  // __aarch64__
