#include <cmath>

#include "cma/simd.hpp"

namespace cma::simd {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double sum_abs_diff_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(x[i] - y[i]);
  return acc;
}

void add_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void gemv_t_scalar(const double* a, const double* b, double* y, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < k; ++i) axpy_scalar(a[i], b + i * n, y, n);
}

void gemv_scalar(const double* b, const double* x, double* y, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) y[i] += dot_scalar(b + i * n, x, n);
}

void ger_scalar(const double* x, const double* y, double* b, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) axpy_scalar(x[i], y, b + i * n, n);
}

void exp_sub_scalar(const double* x, const double* shift, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i] - shift[i]);
}

constexpr KernelTable kScalar{Isa::kScalar, dot_scalar,    axpy_scalar, sum_abs_diff_scalar,
                              add_scalar,   gemv_t_scalar, gemv_scalar, ger_scalar,
                              exp_sub_scalar};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace cma::simd
