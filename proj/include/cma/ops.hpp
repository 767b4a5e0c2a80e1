#pragma once

#include <cstddef>
#include <utility>

#include "cma/tensor.hpp"

// Pure tensor primitives and their analytic backward passes. The tape in
// cma/tape.hpp records applications of these and replays the *_backward
// functions in reverse order.

namespace cma::ops {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};

struct Deconv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding = 0;
};

struct PairGrads {
  Tensor first;
  Tensor second;
};

/// H×W×C -> C×HW with out[c, h*W + w] = x[h, w, c].
Tensor flatten(const Tensor& x);
/// C×HW -> H×W×C, the exact inverse of flatten.
Tensor reshape3d(const Tensor& x, std::size_t h, std::size_t w);

Tensor transpose(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
/// {dA = dOut·Bᵀ, dB = Aᵀ·dOut}; a side is left empty when not wanted.
PairGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dout,
                          bool want_da = true, bool want_db = true);

/// Each column normalised to a probability vector (max-subtracted).
Tensor softmax_columns(const Tensor& x);
Tensor softmax_columns_backward(const Tensor& y, const Tensor& dy);

/// Cross-correlation. x: H×W×Cin, k: kh×kw×Cin×Cout, zero padding.
Tensor conv2d(const Tensor& x, const Tensor& k, Conv2dOptions opt = {});
/// {dx, dk}.
PairGrads conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& dout,
                          Conv2dOptions opt = {}, bool want_dx = true, bool want_dk = true);

/// Transposed convolution, the adjoint of conv2d with the same kernel:
/// x: H×W×Cx, k: kh×kw×Cout×Cx, output (H-1)·stride - 2·padding + kh + output_padding.
Tensor deconv2d(const Tensor& x, const Tensor& k, Deconv2dOptions opt = {});
PairGrads deconv2d_backward(const Tensor& x, const Tensor& k, const Tensor& dout,
                            Deconv2dOptions opt = {}, bool want_dx = true, bool want_dk = true);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

/// Per-channel bias on the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor bias_backward(const Tensor& dy, std::size_t channels);

/// Stacks along the channel (last) axis of two H×W×C tensors.
Tensor concat_channels(const Tensor& a, const Tensor& b);
PairGrads split_channels(const Tensor& dy, std::size_t channels_first);

/// Bilinear resize of H×W×C, align-corners=false (half-pixel centres, edge clamp).
Tensor upsample_bilinear(const Tensor& x, std::size_t h, std::size_t w);
Tensor upsample_bilinear_backward(const Tensor& dy, std::size_t in_h, std::size_t in_w);

}  // namespace cma::ops
