#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace intervene::simd {

// Dispatch table for the dense inner loops behind the kernel matrices and the
// gain evaluators.  Every entry has a scalar reference implementation; wider
// variants must agree with it up to floating-point reassociation.
struct Ops {
  const char* name;

  // sum_i x[i]
  double (*reduce_sum)(const double* x, std::size_t n);

  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);

  // sum_i w[i] * (a[i] - b[i])^2
  double (*weighted_sqdist)(const double* a, const double* b, const double* w,
                            std::size_t n);

  // acc[i] += inv_l2 * (q - col[i])^2
  void (*ard_accumulate)(double* acc, const double* col, double q,
                         double inv_l2, std::size_t n);

  // out[i] += w * col[i]
  void (*axpy)(double* out, double w, const double* col, std::size_t n);
};

const Ops& scalar_ops();
const Ops* avx2_ops();  // nullptr when the build or the CPU lacks AVX2
const Ops* neon_ops();  // nullptr off aarch64

// Active table, resolved once per process: INTERVENE_SIMD=scalar|avx2|neon
// overrides, otherwise the widest variant the CPU supports wins.
const Ops& active();

// Pin a variant by name (tests); throws std::invalid_argument if unavailable.
void force(const std::string& name);

std::vector<const Ops*> available();

}  // namespace intervene::simd
