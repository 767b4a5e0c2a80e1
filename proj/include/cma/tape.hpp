#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cma/ops.hpp"
#include "cma/tensor.hpp"

namespace cma {

enum class OpKind : std::uint8_t {
  kLeaf,
  kFlatten,
  kReshape3d,
  kReshape,
  kTranspose,
  kMatmul,
  kSoftmaxColumns,
  kConv2d,
  kDeconv2d,
  kSigmoid,
  kRelu,
  kHadamard,
  kAdd,
  kAddBias,
  kConcatChannels,
  kUpsampleBilinear,
  kBceLoss,
  kIouLoss,
  kEmLoss,
};

std::string_view op_name(OpKind kind);

class Tape;

/// Handle to one recorded value. Cheap to copy; valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Per-node attributes needed by the backward pass.
struct TapeAttrs {
  ops::Conv2dOptions conv{};
  ops::Deconv2dOptions deconv{};
  std::size_t a = 0;  // reshape3d h / concat split / upsample input h
  std::size_t b = 0;  // reshape3d w / upsample input w
  Shape shape{};      // original shape for kReshape
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward() walks
/// them once in reverse and accumulates gradients into every input that needs one.
/// Single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Tensor value);
  /// Leaf that does not.
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Zero tensor of the value's shape if nothing flowed into v.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Seeds d(out)/d(out) = 1 for a single-element output and propagates.
  void backward(Var out);
  /// Seeds with an arbitrary upstream gradient of out's shape.
  void backward(Var out, const Tensor& seed);

  std::size_t size() const { return nodes_.size(); }

  using Attrs = TapeAttrs;

  /// Appends a node computed by the caller. Public for the loss and attention
  /// front ends; the ad:: functions below are the intended entry points.
  Var record(OpKind kind, std::span<const Var> inputs, Tensor value, Attrs attrs = {},
             Tensor aux = {});

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::array<std::size_t, 2> inputs{};
    std::uint8_t arity = 0;
    bool requires_grad = false;
    Tensor value;
    Tensor grad;
    Tensor aux;  // loss targets
    Attrs attrs;
  };

  void accumulate(std::size_t id, Tensor g);
  void propagate(const Node& node, const Tensor& g);

  std::vector<Node> nodes_;
  mutable std::vector<std::optional<Tensor>> zero_cache_;
};

/// Test hook: while set, the backward pass of `kind` returns gradients scaled by
/// 1.5 so that gradient checks must fail. Not for production use.
void set_backward_fault(std::optional<OpKind> kind);
std::optional<OpKind> backward_fault();

// Differentiable front ends. All inputs must live on the same tape.
namespace ad {

Var flatten(Var x);
Var reshape3d(Var x, std::size_t h, std::size_t w);
Var reshape(Var x, Shape shape);
Var transpose(Var x);
Var matmul(Var a, Var b);
Var softmax_columns(Var x);
Var conv2d(Var x, Var k, ops::Conv2dOptions opt = {});
Var deconv2d(Var x, Var k, ops::Deconv2dOptions opt = {});
Var sigmoid(Var x);
Var relu(Var x);
Var hadamard(Var a, Var b);
Var add(Var a, Var b);
Var add_bias(Var x, Var bias);
Var concat_channels(Var a, Var b);
Var upsample_bilinear(Var x, std::size_t h, std::size_t w);

}  // namespace ad
}  // namespace cma
