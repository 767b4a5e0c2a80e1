#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cma/metrics.hpp"
#include "support/oracles.hpp"

using namespace cma;
using namespace cma::metrics;

namespace {

Tensor block_mask() {
  // 4×4 with the top-left 2×2 block in the foreground.
  Tensor g(Shape{4, 4});
  g.at(0, 0) = g.at(0, 1) = g.at(1, 0) = g.at(1, 1) = 1.0;
  return g;
}

Tensor inverted(const Tensor& g) {
  Tensor out(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = 1.0 - g[i];
  return out;
}

}  // namespace

TEST_CASE("MAE") {
  oracle::Rng rng(91);
  const Tensor g = oracle::random_mask(8, 8, rng);
  CHECK(mae({g, g}) == 0.0);
  CHECK(mae({inverted(g), g}) == 1.0);
  for (int i = 0; i < 20; ++i) {
    const EvalPair p{oracle::random_map(8, 8, rng), oracle::random_mask(8, 8, rng)};
    CHECK(std::fabs(mae(p) - oracle::mae(oracle::to_grid(p.pred), oracle::to_grid(p.gt))) < 1e-15);
  }
  CHECK_THROWS_AS(mae({Tensor(Shape{4, 4}), Tensor(Shape{4, 5})}), ShapeError);
  CHECK_THROWS_AS(mae({Tensor(Shape{2, 2}, 0.5), Tensor(Shape{2, 2}, 0.5)}), ContractError);
}

TEST_CASE("F-measure") {
  CHECK(f_beta(0.5, 1.0) == doctest::Approx(0.565217391304).epsilon(1e-12));
  CHECK(f_beta(0.5, 1.0) == doctest::Approx(1.3 * 0.5 / (0.3 * 0.5 + 1.0)).epsilon(1e-15));
  CHECK(f_beta(0.0, 0.0) == 0.0);
  CHECK(f_beta(1.0, 1.0) == 1.0);
  CHECK(kBetaSquared == 0.3);

  const Tensor g = block_mask();
  CHECK(f_measure({g, g}, 128) == 1.0);
  CHECK(f_measure({inverted(g), g}, 128) == 0.0);
  // Precision 0.5, recall 1 from a prediction twice the size of the mask.
  Tensor p = g;
  p.at(2, 0) = p.at(2, 1) = p.at(3, 0) = p.at(3, 1) = 1.0;
  CHECK(f_measure({p, g}, 128) == doctest::Approx(0.565217391304).epsilon(1e-12));
  // Nothing passes above 255 on a map below 1.
  CHECK(f_measure({Tensor(Shape{4, 4}, 0.9), g}, 255) == 0.0);
}

TEST_CASE("adaptive threshold") {
  CHECK(adaptive_threshold(Tensor(Shape{4, 4}, 0.25)) == 127.5);
  CHECK(adaptive_threshold(Tensor(Shape{4, 4}, 0.0)) == 0.0);
  CHECK(adaptive_threshold(Tensor(Shape{4, 4}, 1.0)) == 255.0);
}

TEST_CASE("E-measure") {
  const Tensor g = block_mask();
  CHECK(std::fabs(e_measure({g, g}, 128) - 1.0) < 1e-9);
  CHECK(std::fabs(e_measure_soft({g, g}) - 1.0) < 1e-9);

  Tensor half(Shape{4, 4});
  for (std::size_t c = 0; c < 4; ++c) half.at(0, c) = half.at(1, c) = 1.0;
  const double inv = e_measure({inverted(half), half}, 128);
  CHECK(inv == doctest::Approx(oracle::e_measure(oracle::to_grid(inverted(half)), oracle::to_grid(half), 128)));
  CHECK(inv < 1e-9);

  // A flat 0.5 map demeans to zero, as does the all-foreground map at τ = 0.
  const Tensor flat(Shape{4, 4}, 0.5);
  CHECK(e_measure_soft({flat, half}) == doctest::Approx(e_measure({flat, half}, 0)).epsilon(1e-15));
  CHECK(e_measure_soft({flat, half}) ==
        doctest::Approx(oracle::e_measure_soft(oracle::to_grid(flat), oracle::to_grid(half))).epsilon(1e-15));
  CHECK(e_measure_soft({flat, half}) == doctest::Approx(0.25));

  SUBCASE("degenerate ground truth") {
    Tensor p(Shape{4, 4});
    p.at(0, 0) = 0.8;
    p.at(3, 3) = 0.3;
    CHECK(e_measure({p, Tensor(Shape{4, 4})}, 128) == doctest::Approx(15.0 / 16.0));
    CHECK(e_measure({p, Tensor(Shape{4, 4}, 1.0)}, 128) == doctest::Approx(1.0 / 16.0));
  }
}

TEST_CASE("S-measure") {
  const Tensor g = block_mask();
  CHECK(std::fabs(s_measure({g, g}) - 1.0) < 1e-9);
  CHECK(s_measure({Tensor(Shape{4, 4}), Tensor(Shape{4, 4})}) == 1.0);
  CHECK(s_measure({Tensor(Shape{4, 4}, 1.0), Tensor(Shape{4, 4}, 1.0)}) == 1.0);
  CHECK(s_measure({Tensor(Shape{4, 4}, 0.25), Tensor(Shape{4, 4})}) == 0.75);

  SUBCASE("equal weighting of object and region terms") {
    CHECK(kAlpha == 0.5);
    oracle::Rng rng(93);
    for (int i = 0; i < 10; ++i) {
      const EvalPair p{oracle::random_map(9, 11, rng), oracle::random_mask(9, 11, rng)};
      const double expect = 0.5 * s_object(p) + 0.5 * s_region(p);
      CHECK(s_measure(p) == doctest::Approx(std::max(expect, 0.0)).epsilon(1e-15));
    }
  }
  SUBCASE("flat 0.5 map on a 2x2 block") {
    // S_o = 2·0.5/(0.25 + 1) = 0.8 on both sides; every quadrant is constant, so S_r = 1.
    const EvalPair p{Tensor(Shape{4, 4}, 0.5), g};
    CHECK(s_object(p) == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(s_region(p) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s_measure(p) == doctest::Approx(0.9).epsilon(1e-14));
  }
}

TEST_CASE("random pairs match the naive loops") {
  oracle::Rng rng(95);
  std::uniform_real_distribution<double> tau(0.0, 255.0);
  for (int i = 0; i < 100; ++i) {
    const Tensor gt = oracle::random_mask(16, 16, rng, 0.1 + 0.008 * i);
    const Tensor pred = i % 2 ? oracle::random_map(16, 16, rng) : oracle::noisy_copy(gt, rng, 0.2);
    const EvalPair p{pred, gt};
    const auto P = oracle::to_grid(pred), G = oracle::to_grid(gt);
    const double t = i % 3 == 0 ? std::floor(tau(rng)) : tau(rng);
    CHECK(std::fabs(mae(p) - oracle::mae(P, G)) < 1e-12);
    CHECK(std::fabs(f_measure(p, t) - oracle::f_measure(P, G, t)) < 1e-12);
    CHECK(std::fabs(e_measure(p, t) - oracle::e_measure(P, G, t)) < 1e-12);
    CHECK(std::fabs(e_measure_soft(p) - oracle::e_measure_soft(P, G)) < 1e-12);
    CHECK(std::fabs(s_measure(p) - oracle::s_measure(P, G)) < 1e-12);
    CHECK(adaptive_threshold(pred) == doctest::Approx(oracle::adaptive_threshold(P)).epsilon(1e-14));
  }
}

TEST_CASE("per-image evaluation") {
  oracle::Rng rng(97);
  for (int i = 0; i < 10; ++i) {
    const Tensor gt = oracle::random_mask(12, 10, rng);
    const EvalPair p{oracle::noisy_copy(gt, rng, 0.25), gt};
    const ImageMetrics m = evaluate_one(p);
    CHECK(m.f_beta == f_measure(p, m.adaptive_tau));
    CHECK(m.e_phi == doctest::Approx(e_measure(p, m.adaptive_tau)).epsilon(1e-14));
    for (std::size_t t = 0; t < kThresholds; ++t) {
      CHECK(m.f_curve[t] == doctest::Approx(f_measure(p, static_cast<double>(t))).epsilon(1e-14));
      CHECK(m.e_curve[t] == doctest::Approx(e_measure(p, static_cast<double>(t))).epsilon(1e-14));
    }
    for (double v : {m.mae, m.f_beta, m.s_alpha, m.e_phi}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("MAE and F are invariant under a joint pixel permutation") {
  oracle::Rng rng(99);
  const Tensor gt = oracle::random_mask(8, 8, rng);
  const Tensor pred = oracle::noisy_copy(gt, rng, 0.3);
  std::vector<std::size_t> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor pp(pred.shape()), gp(gt.shape());
  for (std::size_t i = 0; i < 64; ++i) {
    pp[i] = pred[perm[i]];
    gp[i] = gt[perm[i]];
  }
  CHECK(mae({pp, gp}) == doctest::Approx(mae({pred, gt})).epsilon(1e-15));
  for (double t : {0.0, 60.0, 128.0, 200.0}) CHECK(f_measure({pp, gp}, t) == f_measure({pred, gt}, t));
}

TEST_CASE("dataset evaluation") {
  const Tensor g = block_mask();
  const std::vector<EvalPair> pairs{{g, g}, {Tensor(Shape{4, 4}, 0.5), g}};

  SUBCASE("two hand-built pairs") {
    const MetricReport r = evaluate(pairs);
    // Pair 1 is perfect. Pair 2: MAE 0.5; τ = 255 selects nothing, so F = 0 and
    // every alignment is 0, giving E = 0.25; S = 0.9 as derived above.
    CHECK(r.mae == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r.f_beta == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.e_phi == doctest::Approx(0.625).epsilon(1e-14));
    CHECK(r.s_alpha == doctest::Approx(0.95).epsilon(1e-14));
    REQUIRE(r.per_image.size() == 2);
    CHECK(r.per_image[1].adaptive_tau == 255.0);
  }
  SUBCASE("singleton and duplicates") {
    const std::vector<EvalPair> one{pairs[1]};
    const MetricReport r1 = evaluate(one);
    const ImageMetrics m = evaluate_one(pairs[1]);
    CHECK(r1.mae == m.mae);
    CHECK(r1.s_alpha == m.s_alpha);
    CHECK(r1.f_curve == m.f_curve);
    const std::vector<EvalPair> many(7, pairs[1]);
    const MetricReport r7 = evaluate(many);
    CHECK(r7.mae == doctest::Approx(r1.mae).epsilon(1e-14));
    CHECK(r7.f_beta == doctest::Approx(r1.f_beta).epsilon(1e-14));
    CHECK(r7.s_alpha == doctest::Approx(r1.s_alpha).epsilon(1e-14));
    CHECK(r7.e_phi == doctest::Approx(r1.e_phi).epsilon(1e-14));
    CHECK(r7.e_curve == r1.e_curve);
  }
  SUBCASE("thread count does not change results") {
    oracle::Rng rng(101);
    std::vector<EvalPair> set;
    for (int i = 0; i < 37; ++i) {
      const Tensor gt = oracle::random_mask(16, 16, rng);
      set.push_back({oracle::noisy_copy(gt, rng, 0.3), gt});
    }
    const MetricReport a = evaluate(set, {1});
    const MetricReport b = evaluate(set, {4});
    const MetricReport c = evaluate(set, {0});
    CHECK(a.mae == b.mae);
    CHECK(a.s_alpha == b.s_alpha);
    CHECK(a.f_curve == b.f_curve);
    CHECK(a.e_curve == c.e_curve);
    CHECK(a.e_phi == c.e_phi);
  }
  CHECK_THROWS_AS(evaluate(std::span<const EvalPair>{}), ContractError);
}

TEST_CASE("compensated summation") {
  const std::vector<double> v{1.0, 1e100, 1.0, -1e100};
  CHECK(compensated_sum(v) == 2.0);
  const std::vector<double> tenths(10, 0.1);
  CHECK(compensated_sum(tenths) == 1.0);
}
