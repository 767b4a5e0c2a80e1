#include <doctest.h>

#include <cmath>

#include "cma/gradcheck.hpp"
#include "cma/ops.hpp"
#include "cma/tape.hpp"
#include "support/oracles.hpp"

using namespace cma;
using oracle::random_tensor;

namespace {

double fd_error(const gradcheck::Graph& g, std::vector<Tensor> inputs, std::uint64_t seed) {
  gradcheck::Rng rng(seed);
  return gradcheck::relative_error(g, inputs, rng);
}

}  // namespace

TEST_CASE("flatten index arithmetic") {
  Tensor x(Shape{2, 3, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const Tensor f = ops::flatten(x);
  CHECK(f.shape() == Shape{4, 6});
  // (h=1, w=2, c=3) lands at row c, column h*W + w.
  CHECK(f.at(3, 5) == x.at(1, 2, 3));
  CHECK(ops::reshape3d(f, 2, 3) == x);
}

TEST_CASE("flatten of a single element") {
  const Tensor x(Shape{1, 1, 1}, std::vector<double>{0.5});
  const Tensor f = ops::flatten(x);
  CHECK(f.shape() == Shape{1, 1});
  CHECK(f[0] == 0.5);
}

TEST_CASE("reshape3d") {
  oracle::Rng rng(3);
  const Tensor m = random_tensor(Shape{4, 6}, rng);
  CHECK(ops::reshape3d(m, 2, 3).shape() == Shape{2, 3, 4});
  for (int i = 0; i < 5; ++i) {
    const Tensor x = random_tensor(Shape{3, 5, 2}, rng);
    CHECK(ops::reshape3d(ops::flatten(x), 3, 5) == x);
  }
  CHECK_THROWS_AS(ops::reshape3d(Tensor(Shape{3, 4}), 5, 5), ShapeError);
}

TEST_CASE("matmul") {
  CHECK(ops::matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5}, {6}})) == Tensor::matrix({{17}, {39}}));

  oracle::Rng rng(5);
  const Tensor b = random_tensor(Shape{3, 4}, rng);
  CHECK(ops::matmul(Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), b) == b);
  CHECK_THROWS_AS(ops::matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ShapeError);

  const double err = fd_error([](std::span<const Var> v) { return ad::matmul(v[0], v[1]); },
                              {random_tensor(Shape{4, 5}, rng), random_tensor(Shape{5, 3}, rng)}, 11);
  CHECK(err < 1e-6);
}

TEST_CASE("softmax over columns") {
  const Tensor u = ops::softmax_columns(Tensor(Shape{4, 2}, 3.0));
  for (double v : u.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const Tensor s = ops::softmax_columns(Tensor::matrix({{0.0}, {std::log(2.0)}}));
  CHECK(s[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  // Large logits must not overflow.
  const Tensor big = ops::softmax_columns(Tensor::matrix({{1000.0}, {1000.0}}));
  CHECK(big[0] == doctest::Approx(0.5));

  oracle::Rng rng(7);
  const Tensor x = random_tensor(Shape{6, 5}, rng, -3, 3);
  CHECK(max_abs_diff(ops::softmax_columns(x), oracle::column_softmax(x)) < 1e-15);
  const double err = fd_error([](std::span<const Var> v) { return ad::softmax_columns(v[0]); }, {x}, 13);
  CHECK(err < 1e-6);
}

TEST_CASE("conv2d") {
  oracle::Rng rng(9);
  const Tensor x = random_tensor(Shape{4, 5, 3}, rng);
  Tensor eye(Shape{1, 1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
  CHECK(ops::conv2d(x, eye) == x);

  const Tensor c5(Shape{5, 5, 1}, 0.7);
  const Tensor ones(Shape{3, 3, 1, 1}, 1.0);
  const Tensor y = ops::conv2d(c5, ones, {1, 1, 1});
  CHECK(y.at(2, 2, 0) == doctest::Approx(9 * 0.7));
  CHECK(y.at(0, 0, 0) == doctest::Approx(4 * 0.7));

  SUBCASE("matches a six-loop reference") {
    for (std::size_t d = 1; d <= 3; ++d) {
      const Tensor in = random_tensor(Shape{7, 6, 2}, rng);
      const Tensor k = random_tensor(Shape{3, 3, 2, 4}, rng);
      CHECK(max_abs_diff(ops::conv2d(in, k, {1, d, d}), oracle::conv_same(in, k, d)) < 1e-13);
    }
  }

  SUBCASE("strided output size") {
    CHECK(ops::conv2d(Tensor(Shape{32, 32, 3}), Tensor(Shape{3, 3, 3, 8}), {2, 1, 1}).shape() == Shape{16, 16, 8});
    CHECK(ops::conv2d(Tensor(Shape{5, 5, 3}), Tensor(Shape{3, 3, 3, 2}), {2, 1, 1}).shape() == Shape{3, 3, 2});
  }

  SUBCASE("gradient") {
    const double err = fd_error([](std::span<const Var> v) { return ad::conv2d(v[0], v[1], {1, 1, 1}); },
                                {random_tensor(Shape{5, 5, 2}, rng), random_tensor(Shape{3, 3, 2, 2}, rng)}, 17);
    CHECK(err < 1e-5);
    const double strided = fd_error([](std::span<const Var> v) { return ad::conv2d(v[0], v[1], {2, 2, 2}); },
                                    {random_tensor(Shape{7, 6, 2}, rng), random_tensor(Shape{3, 3, 2, 3}, rng)}, 19);
    CHECK(strided < 1e-5);
  }

  CHECK_THROWS_AS(ops::conv2d(x, Tensor(Shape{3, 3, 2, 2})), ShapeError);
}

TEST_CASE("deconv2d") {
  oracle::Rng rng(21);
  SUBCASE("1x1 stride 1 equals conv2d") {
    const Tensor x = random_tensor(Shape{4, 3, 2}, rng);
    const Tensor k = random_tensor(Shape{1, 1, 2, 2}, rng);
    Tensor kt(k.shape());
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) kt[j * 2 + i] = k[i * 2 + j];
    }
    // deconv kernels are stored Cout×Cx per tap, conv kernels Cin×Cout.
    CHECK(max_abs_diff(ops::deconv2d(x, kt), ops::conv2d(x, k)) < 1e-15);
  }
  SUBCASE("stride 2 doubles 2x2 to 4x4") {
    CHECK(ops::deconv2d(Tensor(Shape{2, 2, 3}), Tensor(Shape{2, 2, 5, 3}), {2, 0, 0}).shape() == Shape{4, 4, 5});
  }
  SUBCASE("adjoint of conv2d") {
    for (const auto& [stride, pad, size] : {std::tuple{1u, 1u, 4u}, {2u, 1u, 5u}, {2u, 0u, 4u}}) {
      const Tensor x = random_tensor(Shape{size, size, 3}, rng);
      const Tensor k = random_tensor(Shape{3, 3, 3, 2}, rng);
      const Tensor cx = ops::conv2d(x, k, {stride, pad, 1});
      const Tensor y = random_tensor(cx.shape(), rng);
      const std::size_t extra = size - ((cx.dim(0) - 1) * stride - 2 * pad + 3);
      const Tensor dy = ops::deconv2d(y, k, {stride, pad, extra});
      REQUIRE(dy.shape() == x.shape());
      CHECK(std::fabs(inner(cx, y) - inner(x, dy)) < 1e-10);
    }
  }
  SUBCASE("gradient") {
    const double err = fd_error([](std::span<const Var> v) { return ad::deconv2d(v[0], v[1], {2, 0, 0}); },
                                {random_tensor(Shape{3, 3, 2}, rng), random_tensor(Shape{2, 2, 3, 2}, rng)}, 23);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("elementwise ops") {
  CHECK(ops::sigmoid(Tensor(Shape{2}, 0.0))[1] == 0.5);
  const Tensor s = ops::sigmoid(Tensor(Shape{2}, std::vector<double>{-800.0, 800.0}));
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 1.0);

  oracle::Rng rng(25);
  const Tensor x = random_tensor(Shape{3, 2, 2}, rng);
  CHECK(ops::hadamard(x, Tensor(x.shape(), 1.0)) == x);
  CHECK(ops::add(x, ops::scale(x, -1.0)) == Tensor(x.shape()));
  const Tensor r = ops::relu(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r[i] == std::max(0.0, x[i]));
  CHECK_THROWS_AS(ops::hadamard(x, Tensor(Shape{3, 2})), ShapeError);
}

TEST_CASE("bias and channel concat") {
  oracle::Rng rng(27);
  const Tensor a = random_tensor(Shape{2, 3, 2}, rng);
  const Tensor b = random_tensor(Shape{2, 3, 4}, rng);
  const Tensor c = ops::concat_channels(a, b);
  CHECK(c.shape() == Shape{2, 3, 6});
  CHECK(c.at(1, 2, 1) == a.at(1, 2, 1));
  CHECK(c.at(1, 2, 5) == b.at(1, 2, 3));
  const auto parts = ops::split_channels(c, 2);
  CHECK(parts.first == a);
  CHECK(parts.second == b);

  const Tensor bias(Shape{2}, std::vector<double>{1.0, -2.0});
  const Tensor y = ops::add_bias(a, bias);
  CHECK(y.at(0, 1, 1) == a.at(0, 1, 1) - 2.0);
  CHECK(ops::bias_backward(Tensor(Shape{2, 3, 2}, 1.0), 2) == Tensor(Shape{2}, 6.0));
}

TEST_CASE("bilinear upsampling") {
  oracle::Rng rng(29);
  const Tensor x = random_tensor(Shape{3, 4, 2}, rng);
  CHECK(ops::upsample_bilinear(x, 3, 4) == x);
  const Tensor c = ops::upsample_bilinear(Tensor(Shape{2, 2, 1}, 0.3), 8, 8);
  for (double v : c.data()) CHECK(v == doctest::Approx(0.3));
  // Half-pixel centres: doubling a 1-D ramp [0, 1] gives [0, .25, .75, 1].
  const Tensor ramp(Shape{1, 2, 1}, std::vector<double>{0.0, 1.0});
  const Tensor up = ops::upsample_bilinear(ramp, 1, 4);
  CHECK(up[1] == doctest::Approx(0.25));
  CHECK(up[2] == doctest::Approx(0.75));
  // The backward pass is the adjoint of the forward map.
  const Tensor y = random_tensor(Shape{7, 9, 2}, rng);
  CHECK(std::fabs(inner(ops::upsample_bilinear(x, 7, 9), y) - inner(x, ops::upsample_bilinear_backward(y, 3, 4))) <
        1e-12);
}

TEST_CASE("tape") {
  Tape tape;
  Var a = tape.variable(Tensor::matrix({{1, 2}, {3, 4}}));
  Var b = tape.constant(Tensor::matrix({{1}, {1}}));
  Var y = ad::matmul(a, b);
  tape.backward(y, Tensor::matrix({{1}, {2}}));
  CHECK(tape.grad(a) == Tensor::matrix({{1, 1}, {2, 2}}));
  CHECK(tape.grad(b) == Tensor(Shape{2, 1}));
  CHECK_FALSE(tape.requires_grad(b));

  SUBCASE("fan-out accumulates") {
    Tape t;
    Var x = t.variable(Tensor(Shape{3}, 2.0));
    Var z = ad::add(ad::hadamard(x, x), x);
    t.backward(z, Tensor(Shape{3}, 1.0));
    CHECK(t.grad(x) == Tensor(Shape{3}, 5.0));
  }
  SUBCASE("backward needs a scalar without a seed") {
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
  }
  SUBCASE("vars from two tapes do not mix") {
    Tape other;
    Var c = other.variable(Tensor(Shape{2, 2}));
    CHECK_THROWS_AS(ad::add(a, c), ContractError);
  }
}
