#pragma once

#include <atomic>
#include <cstddef>
#include <span>
#include <string_view>

// Inner-loop kernels with a portable scalar reference and ISA-specific variants.
// The variant is picked once at startup from cpuid (or CMA_SIMD=scalar|avx2|neon)
// and can be overridden for equivalence testing.

namespace cma::simd {

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
  Isa isa;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // sum_i |x[i] - y[i]|
  double (*sum_abs_diff)(const double* x, const double* y, std::size_t n);
  // y[i] += x[i]
  void (*add)(const double* x, double* y, std::size_t n);
  // y[j] += sum_i a[i] * B[i*n + j]   (B is k×n)
  void (*gemv_t)(const double* a, const double* b, double* y, std::size_t k, std::size_t n);
  // y[i] += sum_j B[i*n + j] * x[j]   (B is m×n)
  void (*gemv)(const double* b, const double* x, double* y, std::size_t m, std::size_t n);
  // B[i*n + j] += x[i] * y[j]
  void (*ger)(const double* x, const double* y, double* b, std::size_t m, std::size_t n);
  // out[i] = exp(x[i] - shift[i])
  void (*exp_sub)(const double* x, const double* shift, double* out, std::size_t n);
};

const KernelTable& scalar_table();
/// nullptr when the variant was not compiled into this binary.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool supported(Isa isa);
std::string_view name(Isa isa);

namespace detail {
extern std::atomic<const KernelTable*> active_table;
const KernelTable& detect_and_install();
}  // namespace detail

/// Active table; set on first use.
inline const KernelTable& active() {
  const KernelTable* t = detail::active_table.load(std::memory_order_acquire);
  return t ? *t : detail::detect_and_install();
}
/// Throws std::runtime_error if the ISA is unsupported on this CPU.
void select(Isa isa);

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline double sum_abs_diff(std::span<const double> x, std::span<const double> y) {
  return active().sum_abs_diff(x.data(), y.data(), x.size());
}
inline void add(std::span<const double> x, std::span<double> y) {
  active().add(x.data(), y.data(), x.size());
}

/// Restores the previously active ISA on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active().isa) { select(isa); }
  ~ScopedIsa() { select(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

}  // namespace cma::simd
