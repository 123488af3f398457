#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "intervene/numerics.hpp"

namespace intervene {

// Seeded random source with portable distributions.  std::mt19937_64 output is
// pinned by the standard; the distribution shaping below is our own, so equal
// seeds give bit-identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  // Standard normal via the inverse CDF; uniform() never returns 1.0 and the
  // offset keeps it away from 0.
  double normal() {
    const double u = (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    return normal_quantile(u);
  }

  // Centered uniform with the requested variance: half-width sqrt(3 v).
  double centered_uniform(double variance) {
    const double a = std::sqrt(3.0 * variance);
    return uniform(-a, a);
  }

  // Centered Laplace with the requested variance (scale sqrt(v / 2)).
  double laplace(double variance) {
    const double b = std::sqrt(0.5 * variance);
    const double u = uniform() - 0.5;
    return -b * std::copysign(std::log1p(-2.0 * std::fabs(u)), u);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace intervene
