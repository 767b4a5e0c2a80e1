// aarch64 only; Advanced SIMD is mandatory there so no runtime probe is needed.
#include <arm_neon.h>

#include <cmath>

#include "cma/simd.hpp"

namespace cma::simd {
namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double sum_abs_diff_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    acc = vaddq_f64(acc, vabdq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  }
  double total = vaddvq_f64(acc);
  for (; i < n; ++i) total += std::fabs(x[i] - y[i]);
  return total;
}

void add_neon(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += x[i];
}

void gemv_t_neon(const double* a, const double* b, double* y, std::size_t k, std::size_t n) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    float64x2_t y0 = vld1q_f64(y + j), y1 = vld1q_f64(y + j + 2);
    float64x2_t y2 = vld1q_f64(y + j + 4), y3 = vld1q_f64(y + j + 6);
    for (std::size_t i = 0; i < k; ++i) {
      const float64x2_t va = vdupq_n_f64(a[i]);
      const double* row = b + i * n + j;
      y0 = vfmaq_f64(y0, va, vld1q_f64(row));
      y1 = vfmaq_f64(y1, va, vld1q_f64(row + 2));
      y2 = vfmaq_f64(y2, va, vld1q_f64(row + 4));
      y3 = vfmaq_f64(y3, va, vld1q_f64(row + 6));
    }
    vst1q_f64(y + j, y0);
    vst1q_f64(y + j + 2, y1);
    vst1q_f64(y + j + 4, y2);
    vst1q_f64(y + j + 6, y3);
  }
  for (; j < n; ++j) {
    double acc = y[j];
    for (std::size_t i = 0; i < k; ++i) acc += a[i] * b[i * n + j];
    y[j] = acc;
  }
}

void gemv_neon(const double* b, const double* x, double* y, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) y[i] += dot_neon(b + i * n, x, n);
}

void ger_neon(const double* x, const double* y, double* b, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) axpy_neon(x[i], y, b + i * n, n);
}

// Same reduction as the AVX2 path: 2^k · e^r, degree-13 Taylor on |r| ≤ ln2/2.
float64x2_t exp2v(float64x2_t x) {
  const float64x2_t xc = vminq_f64(vmaxq_f64(x, vdupq_n_f64(-746.0)), vdupq_n_f64(710.0));
  const float64x2_t kf = vrndnq_f64(vmulq_f64(xc, vdupq_n_f64(1.4426950408889634)));
  float64x2_t r = vfmsq_f64(xc, kf, vdupq_n_f64(6.93147180369123816490e-01));
  r = vfmsq_f64(r, kf, vdupq_n_f64(1.90821492927058770002e-10));
  static constexpr double kInvFact[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
                                        1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
                                        1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
                                        1.0 / 24.0,         1.0 / 6.0,         0.5,
                                        1.0,                1.0};
  float64x2_t p = vdupq_n_f64(kInvFact[0]);
  for (std::size_t i = 1; i < sizeof(kInvFact) / sizeof(double); ++i) p = vfmaq_f64(vdupq_n_f64(kInvFact[i]), p, r);
  const int64x2_t k = vcvtq_s64_f64(kf);
  const int64x2_t k1 = vshrq_n_s64(k, 1);
  const int64x2_t k2 = vsubq_s64(k, k1);
  auto pow2 = [](int64x2_t e) {
    return vreinterpretq_f64_s64(vshlq_n_s64(vaddq_s64(e, vdupq_n_s64(1023)), 52));
  };
  const float64x2_t out = vmulq_f64(vmulq_f64(p, pow2(k1)), pow2(k2));
  const uint64x2_t ordered = vceqq_f64(x, x);
  return vbslq_f64(ordered, out, x);
}

void exp_sub_neon(const double* x, const double* shift, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, exp2v(vsubq_f64(vld1q_f64(x + i), vld1q_f64(shift + i))));
  for (; i < n; ++i) out[i] = std::exp(x[i] - shift[i]);
}

constexpr KernelTable kNeon{Isa::kNeon, dot_neon,    axpy_neon, sum_abs_diff_neon,
                            add_neon,   gemv_t_neon, gemv_neon, ger_neon,
                            exp_sub_neon};

}  // namespace

const KernelTable* neon_table() { return &kNeon; }

}  // namespace cma::simd
