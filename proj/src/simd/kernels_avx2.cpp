// Compiled with -mavx2 -mfma; only reached after a cpuid check.
#include <immintrin.h>

#include <cmath>
#include <iterator>

#include "cma/simd.hpp"

namespace cma::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double sum_abs_diff_avx2(const double* x, const double* y, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4));
    acc0 = _mm256_add_pd(acc0, _mm256_andnot_pd(sign, d0));
    acc1 = _mm256_add_pd(acc1, _mm256_andnot_pd(sign, d1));
  }
  for (; i + 4 <= n; i += 4) {
    __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc0 = _mm256_add_pd(acc0, _mm256_andnot_pd(sign, d0));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += std::fabs(x[i] - y[i]);
  return acc;
}

void add_avx2(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void gemv_t_avx2(const double* a, const double* b, double* y, std::size_t k, std::size_t n) {
  std::size_t j = 0;
  // Sixteen output columns live in registers while B streams past.
  for (; j + 16 <= n; j += 16) {
    __m256d y0 = _mm256_loadu_pd(y + j), y1 = _mm256_loadu_pd(y + j + 4);
    __m256d y2 = _mm256_loadu_pd(y + j + 8), y3 = _mm256_loadu_pd(y + j + 12);
    for (std::size_t i = 0; i < k; ++i) {
      const __m256d va = _mm256_set1_pd(a[i]);
      const double* row = b + i * n + j;
      y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(row), y0);
      y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(row + 4), y1);
      y2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(row + 8), y2);
      y3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(row + 12), y3);
    }
    _mm256_storeu_pd(y + j, y0);
    _mm256_storeu_pd(y + j + 4, y1);
    _mm256_storeu_pd(y + j + 8, y2);
    _mm256_storeu_pd(y + j + 12, y3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d y0 = _mm256_loadu_pd(y + j);
    for (std::size_t i = 0; i < k; ++i) {
      y0 = _mm256_fmadd_pd(_mm256_set1_pd(a[i]), _mm256_loadu_pd(b + i * n + j), y0);
    }
    _mm256_storeu_pd(y + j, y0);
  }
  for (; j < n; ++j) {
    double acc = y[j];
    for (std::size_t i = 0; i < k; ++i) acc += a[i] * b[i * n + j];
    y[j] = acc;
  }
}

void gemv_avx2(const double* b, const double* x, double* y, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) y[i] += dot_avx2(b + i * n, x, n);
}

void ger_avx2(const double* x, const double* y, double* b, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) axpy_avx2(x[i], y, b + i * n, n);
}

// exp via 2^k · e^r with |r| ≤ ln2/2 and a degree-13 Taylor polynomial; the
// truncation error is below 1e-17 relative, so results sit within a few ulp of libm.
__m256d exp4(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-746.0), hi = _mm256_set1_pd(710.0);
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
  const __m256d kf = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(1.4426950408889634)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(kf, _mm256_set1_pd(6.93147180369123816490e-01), xc);
  r = _mm256_fnmadd_pd(kf, _mm256_set1_pd(1.90821492927058770002e-10), r);

  static constexpr double kInvFact[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
                                        1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
                                        1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
                                        1.0 / 24.0,         1.0 / 6.0,         0.5,
                                        1.0,                1.0};
  __m256d p = _mm256_set1_pd(kInvFact[0]);
  for (std::size_t i = 1; i < std::size(kInvFact); ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[i]));

  // Split 2^k into two factors so subnormal results and k = 1024 both scale correctly.
  const __m128i k = _mm256_cvtpd_epi32(kf);
  const __m128i k1 = _mm_srai_epi32(k, 1);
  const __m128i k2 = _mm_sub_epi32(k, k1);
  auto pow2 = [](__m128i e) {
    const __m256i wide = _mm256_add_epi64(_mm256_cvtepi32_epi64(e), _mm256_set1_epi64x(1023));
    return _mm256_castsi256_pd(_mm256_slli_epi64(wide, 52));
  };
  __m256d out = _mm256_mul_pd(_mm256_mul_pd(p, pow2(k1)), pow2(k2));
  const __m256d nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  return _mm256_blendv_pd(out, x, nan);
}

void exp_sub_avx2(const double* x, const double* shift, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, exp4(_mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(shift + i))));
  }
  for (; i < n; ++i) out[i] = std::exp(x[i] - shift[i]);
}

constexpr KernelTable kAvx2{Isa::kAvx2, dot_avx2,    axpy_avx2, sum_abs_diff_avx2,
                            add_avx2,   gemv_t_avx2, gemv_avx2, ger_avx2,
                            exp_sub_avx2};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace cma::simd
