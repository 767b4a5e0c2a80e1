#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "cma/simd.hpp"

namespace cma::simd {

#if !defined(CMA_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif
#if !defined(CMA_HAVE_NEON)
const KernelTable* neon_table() { return nullptr; }
#endif

namespace {

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return &scalar_table();
    case Isa::kAvx2:
      return avx2_table();
    case Isa::kNeon:
      return neon_table();
  }
  return nullptr;
}

Isa detect() {
  if (const char* env = std::getenv("CMA_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Isa::kScalar;
    if (want == "avx2" && supported(Isa::kAvx2)) return Isa::kAvx2;
    if (want == "neon" && supported(Isa::kNeon)) return Isa::kNeon;
  }
  if (supported(Isa::kAvx2)) return Isa::kAvx2;
  if (supported(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

}  // namespace

bool supported(Isa isa) {
  if (table_for(isa) == nullptr) return false;
#if defined(CMA_HAVE_AVX2)
  if (isa == Isa::kAvx2) {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }
#endif
  return true;
}

std::string_view name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

namespace detail {

std::atomic<const KernelTable*> active_table{nullptr};

const KernelTable& detect_and_install() {
  const KernelTable* t = table_for(detect());
  const KernelTable* expected = nullptr;
  if (!active_table.compare_exchange_strong(expected, t, std::memory_order_acq_rel)) t = expected;
  return *t;
}

}  // namespace detail

void select(Isa isa) {
  if (!supported(isa)) {
    throw std::runtime_error("simd variant not available: " + std::string(name(isa)));
  }
  detail::active_table.store(table_for(isa), std::memory_order_release);
}

}  // namespace cma::simd
