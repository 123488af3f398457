#include <cstdlib>
#include <stdexcept>

#include "intervene/simd/kernels.hpp"

namespace intervene::simd {

#if defined(INTERVENE_HAVE_AVX2_TU)
const Ops* avx2_table_raw();
#endif
#if defined(__aarch64__)
const Ops* neon_table_raw();
#endif

const Ops* avx2_ops() {
#if defined(INTERVENE_HAVE_AVX2_TU)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return avx2_table_raw();
#endif
  return nullptr;
}

const Ops* neon_ops() {
#if defined(__aarch64__)
  return neon_table_raw();
#else
  return nullptr;
#endif
}

namespace {

const Ops* find(const std::string& name) {
  if (name == "scalar") return &scalar_ops();
  if (name == "avx2") return avx2_ops();
  if (name == "neon") return neon_ops();
  return nullptr;
}

const Ops* resolve() {
  if (const char* env = std::getenv("INTERVENE_SIMD")) {
    if (const Ops* picked = find(env)) return picked;
    // Unknown or unavailable override: fall through to auto-detection rather
    // than crash a batch run over an env var typo.
  }
  if (const Ops* v = avx2_ops()) return v;
  if (const Ops* v = neon_ops()) return v;
  return &scalar_ops();
}

const Ops*& selection() {
  static const Ops* sel = resolve();
  return sel;
}

}  // namespace

const Ops& active() { return *selection(); }

void force(const std::string& name) {
  const Ops* picked = find(name);
  if (picked == nullptr)
    throw std::invalid_argument("simd variant unavailable: " + name);
  selection() = picked;
}

std::vector<const Ops*> available() {
  std::vector<const Ops*> out{&scalar_ops()};
  if (const Ops* v = avx2_ops()) out.push_back(v);
  if (const Ops* v = neon_ops()) out.push_back(v);
  return out;
}

}  // namespace intervene::simd
