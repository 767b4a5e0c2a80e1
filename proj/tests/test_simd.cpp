#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "cma/ops.hpp"
#include "cma/simd.hpp"
#include "support/oracles.hpp"

using namespace cma;
using simd::Isa;
using simd::KernelTable;

namespace {

std::vector<const KernelTable*> vector_tables() {
  std::vector<const KernelTable*> out;
  if (simd::supported(Isa::kAvx2)) out.push_back(simd::avx2_table());
  if (simd::supported(Isa::kNeon)) out.push_back(simd::neon_table());
  return out;
}

std::vector<double> rand_vec(std::size_t n, oracle::Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double rel(double a, double b) { return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-300}); }

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]) / std::max(1.0, std::fabs(b[i])));
  return m;
}

}  // namespace

TEST_CASE("scalar table is always available") {
  CHECK(simd::supported(Isa::kScalar));
  CHECK(simd::scalar_table().isa == Isa::kScalar);
  CHECK(simd::name(Isa::kAvx2) == "avx2");
  simd::ScopedIsa scope(Isa::kScalar);
  CHECK(simd::active().isa == Isa::kScalar);
}

TEST_CASE("selecting a missing ISA throws") {
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (!simd::supported(isa)) CHECK_THROWS_AS(simd::select(isa), std::runtime_error);
  }
}

TEST_CASE("vector kernels agree with the scalar reference") {
  const auto tables = vector_tables();
  if (tables.empty()) {
    MESSAGE("no vector ISA on this machine");
    return;
  }
  const KernelTable& ref = simd::scalar_table();
  oracle::Rng rng(41);
  for (const KernelTable* t : tables) {
    CAPTURE(simd::name(t->isa));
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 33u, 64u, 101u, 1000u}) {
      CAPTURE(n);
      const auto x = rand_vec(n, rng), y = rand_vec(n, rng);

      CHECK(rel(t->dot(x.data(), y.data(), n), ref.dot(x.data(), y.data(), n)) < 1e-12);
      CHECK(rel(t->sum_abs_diff(x.data(), y.data(), n), ref.sum_abs_diff(x.data(), y.data(), n)) < 1e-13);

      auto ya = y, yb = y;
      t->axpy(0.37, x.data(), ya.data(), n);
      ref.axpy(0.37, x.data(), yb.data(), n);
      CHECK(max_rel(ya, yb) < 1e-15);

      ya = y;
      yb = y;
      t->add(x.data(), ya.data(), n);
      ref.add(x.data(), yb.data(), n);
      CHECK(ya == yb);

      const auto shift = rand_vec(n, rng);
      std::vector<double> ea(n), eb(n);
      t->exp_sub(x.data(), shift.data(), ea.data(), n);
      ref.exp_sub(x.data(), shift.data(), eb.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(rel(ea[i], eb[i]) < 1e-15);
    }

    for (const auto& [k, n] : {std::pair{1u, 1u}, {3u, 5u}, {7u, 16u}, {9u, 37u}, {16u, 64u}, {5u, 3u}}) {
      CAPTURE(k);
      CAPTURE(n);
      const auto a = rand_vec(k, rng), b = rand_vec(k * n, rng), y0 = rand_vec(n, rng);
      auto ya = y0, yb = y0;
      t->gemv_t(a.data(), b.data(), ya.data(), k, n);
      ref.gemv_t(a.data(), b.data(), yb.data(), k, n);
      CHECK(max_rel(ya, yb) < 1e-13);

      const auto x = rand_vec(n, rng), z0 = rand_vec(k, rng);
      auto za = z0, zb = z0;
      t->gemv(b.data(), x.data(), za.data(), k, n);
      ref.gemv(b.data(), x.data(), zb.data(), k, n);
      CHECK(max_rel(za, zb) < 1e-13);

      auto ba = b, bb = b;
      t->ger(a.data(), x.data(), ba.data(), k, n);
      ref.ger(a.data(), x.data(), bb.data(), k, n);
      CHECK(max_rel(ba, bb) < 1e-15);
    }
  }
}

TEST_CASE("vector exp across the full range") {
  const auto tables = vector_tables();
  if (tables.empty()) return;
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> x{-800.0, -745.0, -708.5, -50.0, -1e-300, 0.0, 1e-12, 0.3465, 1.0, 88.7, 700.0, 709.7, 710.0, -inf, nan};
  for (double v = -30.0; v < 30.0; v += 0.173) x.push_back(v);
  const std::vector<double> zero(x.size(), 0.0);
  std::vector<double> out(x.size());
  for (const KernelTable* t : tables) {
    t->exp_sub(x.data(), zero.data(), out.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      CAPTURE(x[i]);
      const double want = std::exp(x[i]);
      if (std::isnan(want)) {
        CHECK(std::isnan(out[i]));
      } else if (want == 0.0 || std::isinf(want)) {
        CHECK(out[i] == want);
      } else if (want < std::numeric_limits<double>::min()) {
        CHECK(std::fabs(out[i] - want) <= 4 * std::numeric_limits<double>::denorm_min());
      } else {
        CHECK(rel(out[i], want) < 1e-15);
      }
    }
  }
}

TEST_CASE("ops give the same results under every ISA") {
  const auto tables = vector_tables();
  if (tables.empty()) return;
  oracle::Rng rng(43);
  const Tensor x = oracle::random_tensor(Shape{9, 7, 5}, rng);
  const Tensor k = oracle::random_tensor(Shape{3, 3, 5, 6}, rng);
  const Tensor dy = oracle::random_tensor(Shape{9, 7, 6}, rng);
  const Tensor m = oracle::random_tensor(Shape{20, 13}, rng, -4, 4);

  auto run = [&] {
    std::vector<Tensor> out;
    out.push_back(ops::conv2d(x, k, {1, 2, 2}));
    auto g = ops::conv2d_backward(x, k, dy, {1, 2, 2});
    out.push_back(g.first);
    out.push_back(g.second);
    out.push_back(ops::deconv2d(dy, k, {1, 1, 0}));
    out.push_back(ops::matmul(m, ops::transpose(m)));
    out.push_back(ops::softmax_columns(m));
    return out;
  };
  std::vector<Tensor> reference;
  {
    simd::ScopedIsa scalar(Isa::kScalar);
    reference = run();
  }
  for (const KernelTable* t : tables) {
    simd::ScopedIsa scope(t->isa);
    const auto got = run();
    for (std::size_t i = 0; i < got.size(); ++i) {
      CAPTURE(i);
      CHECK(max_abs_diff(got[i], reference[i]) < 1e-12);
    }
  }
}
