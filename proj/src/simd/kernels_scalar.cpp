#include "intervene/simd/kernels.hpp"

namespace intervene::simd {
namespace {

double reduce_sum_ref(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double dot_ref(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double weighted_sqdist_ref(const double* a, const double* b, const double* w,
                           std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += w[i] * d * d;
  }
  return s;
}

void ard_accumulate_ref(double* acc, const double* col, double q,
                        double inv_l2, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double d = q - col[i];
    acc[i] += inv_l2 * d * d;
  }
}

void axpy_ref(double* out, double w, const double* col, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += w * col[i];
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops = {"scalar",    reduce_sum_ref,     dot_ref,
                          weighted_sqdist_ref, ard_accumulate_ref, axpy_ref};
  return ops;
}

}  // namespace intervene::simd
