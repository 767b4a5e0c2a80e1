#include "cma/tape.hpp"

#include <atomic>
#include <stdexcept>

#include "cma/losses.hpp"
#include "cma/simd.hpp"

namespace cma {
namespace {

// -1 means no fault injected.
std::atomic<int> g_fault{-1};

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("vars live on different tapes");
  return *a.tape;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kFlatten: return "flatten";
    case OpKind::kReshape3d: return "reshape3d";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kSoftmaxColumns: return "softmax_columns";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kDeconv2d: return "deconv2d";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kHadamard: return "hadamard";
    case OpKind::kAdd: return "add";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kConcatChannels: return "concat_channels";
    case OpKind::kUpsampleBilinear: return "upsample_bilinear";
    case OpKind::kBceLoss: return "bce_loss";
    case OpKind::kIouLoss: return "iou_loss";
    case OpKind::kEmLoss: return "em_loss";
  }
  return "unknown";
}

void set_backward_fault(std::optional<OpKind> kind) {
  g_fault.store(kind ? static_cast<int>(*kind) : -1);
}

std::optional<OpKind> backward_fault() {
  const int v = g_fault.load();
  if (v < 0) return std::nullopt;
  return static_cast<OpKind>(v);
}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(OpKind kind, std::span<const Var> inputs, Tensor value, Attrs attrs, Tensor aux) {
  if (inputs.size() > 2) throw ContractError("tape nodes take at most two inputs");
  Node n;
  n.kind = kind;
  n.arity = static_cast<std::uint8_t>(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].tape != this) throw ContractError("input recorded on another tape");
    n.inputs[i] = inputs[i].id;
    n.requires_grad = n.requires_grad || nodes_[inputs[i].id].requires_grad;
  }
  n.value = std::move(value);
  n.aux = std::move(aux);
  n.attrs = attrs;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == n.value.size() && n.grad.shape() == n.value.shape()) return n.grad;
  if (zero_cache_.size() < nodes_.size()) zero_cache_.resize(nodes_.size());
  auto& z = zero_cache_[v.id];
  if (!z) z = Tensor(n.value.shape());
  return *z;
}

void Tape::accumulate(std::size_t id, Tensor g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  require_same_shape(n.value, g, "gradient accumulation");
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad = std::move(g);
  } else {
    simd::add(g.data(), n.grad.data());
  }
}

void Tape::backward(Var out) {
  if (value(out).size() != 1) throw ShapeError("backward() without seed needs a scalar output");
  backward(out, Tensor(value(out).shape(), 1.0));
}

void Tape::backward(Var out, const Tensor& seed) {
  if (out.tape != this) throw ContractError("backward on foreign var");
  for (auto& n : nodes_) n.grad = Tensor();
  zero_cache_.clear();
  accumulate(out.id, seed);
  for (std::size_t id = out.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (n.kind == OpKind::kLeaf || !n.requires_grad || n.grad.size() == 0) continue;
    propagate(n, n.grad);
  }
}

void Tape::propagate(const Node& node, const Tensor& g) {
  const std::size_t i0 = node.inputs[0];
  const std::size_t i1 = node.inputs[1];
  const bool want0 = nodes_[i0].requires_grad;
  const bool want1 = node.arity > 1 && nodes_[i1].requires_grad;
  const Tensor& x0 = nodes_[i0].value;
  const auto fault = backward_fault();
  const double corrupt = (fault && *fault == node.kind) ? 1.5 : 1.0;
  auto send = [&](std::size_t id, Tensor grad) {
    if (corrupt != 1.0) grad = ops::scale(grad, corrupt);
    accumulate(id, std::move(grad));
  };

  switch (node.kind) {
    case OpKind::kLeaf:
      return;
    case OpKind::kFlatten:
      send(i0, ops::reshape3d(g, x0.dim(0), x0.dim(1)));
      return;
    case OpKind::kReshape3d:
      send(i0, ops::flatten(g));
      return;
    case OpKind::kReshape:
      send(i0, g.reshaped(x0.shape()));
      return;
    case OpKind::kTranspose:
      send(i0, ops::transpose(g));
      return;
    case OpKind::kMatmul: {
      auto grads = ops::matmul_backward(x0, nodes_[i1].value, g, want0, want1);
      if (want0) send(i0, std::move(grads.first));
      if (want1) send(i1, std::move(grads.second));
      return;
    }
    case OpKind::kSoftmaxColumns:
      send(i0, ops::softmax_columns_backward(node.value, g));
      return;
    case OpKind::kConv2d: {
      auto grads = ops::conv2d_backward(x0, nodes_[i1].value, g, node.attrs.conv, want0, want1);
      if (want0) send(i0, std::move(grads.first));
      if (want1) send(i1, std::move(grads.second));
      return;
    }
    case OpKind::kDeconv2d: {
      auto grads = ops::deconv2d_backward(x0, nodes_[i1].value, g, node.attrs.deconv, want0, want1);
      if (want0) send(i0, std::move(grads.first));
      if (want1) send(i1, std::move(grads.second));
      return;
    }
    case OpKind::kSigmoid:
      send(i0, ops::sigmoid_backward(node.value, g));
      return;
    case OpKind::kRelu:
      send(i0, ops::relu_backward(x0, g));
      return;
    case OpKind::kHadamard:
      if (want0) send(i0, ops::hadamard(g, nodes_[i1].value));
      if (want1) send(i1, ops::hadamard(g, x0));
      return;
    case OpKind::kAdd:
      if (want0) send(i0, g);
      if (want1) send(i1, g);
      return;
    case OpKind::kAddBias:
      if (want0) send(i0, g);
      if (want1) send(i1, ops::bias_backward(g, nodes_[i1].value.dim(0)));
      return;
    case OpKind::kConcatChannels: {
      auto parts = ops::split_channels(g, node.attrs.a);
      if (want0) send(i0, std::move(parts.first));
      if (want1) send(i1, std::move(parts.second));
      return;
    }
    case OpKind::kUpsampleBilinear:
      send(i0, ops::upsample_bilinear_backward(g, node.attrs.a, node.attrs.b));
      return;
    case OpKind::kBceLoss:
      send(i0, ops::scale(losses::bce_loss_grad(x0, node.aux), g.item()));
      return;
    case OpKind::kIouLoss:
      send(i0, ops::scale(losses::iou_loss_grad(x0, node.aux), g.item()));
      return;
    case OpKind::kEmLoss:
      send(i0, ops::scale(losses::em_loss_grad(x0, node.aux), g.item()));
      return;
  }
  throw std::logic_error("unhandled op kind in backward");
}

namespace ad {

Var flatten(Var x) {
  return x.tape->record(OpKind::kFlatten, std::array{x}, ops::flatten(x.value()));
}

Var reshape3d(Var x, std::size_t h, std::size_t w) {
  Tape::Attrs attrs;
  attrs.a = h;
  attrs.b = w;
  return x.tape->record(OpKind::kReshape3d, std::array{x}, ops::reshape3d(x.value(), h, w), attrs);
}

Var reshape(Var x, Shape shape) {
  return x.tape->record(OpKind::kReshape, std::array{x}, x.value().reshaped(shape));
}

Var transpose(Var x) {
  return x.tape->record(OpKind::kTranspose, std::array{x}, ops::transpose(x.value()));
}

Var matmul(Var a, Var b) {
  return same_tape(a, b).record(OpKind::kMatmul, std::array{a, b},
                                ops::matmul(a.value(), b.value()));
}

Var softmax_columns(Var x) {
  return x.tape->record(OpKind::kSoftmaxColumns, std::array{x}, ops::softmax_columns(x.value()));
}

Var conv2d(Var x, Var k, ops::Conv2dOptions opt) {
  Tape::Attrs attrs;
  attrs.conv = opt;
  return same_tape(x, k).record(OpKind::kConv2d, std::array{x, k},
                                ops::conv2d(x.value(), k.value(), opt), attrs);
}

Var deconv2d(Var x, Var k, ops::Deconv2dOptions opt) {
  Tape::Attrs attrs;
  attrs.deconv = opt;
  return same_tape(x, k).record(OpKind::kDeconv2d, std::array{x, k},
                                ops::deconv2d(x.value(), k.value(), opt), attrs);
}

Var sigmoid(Var x) {
  return x.tape->record(OpKind::kSigmoid, std::array{x}, ops::sigmoid(x.value()));
}

Var relu(Var x) { return x.tape->record(OpKind::kRelu, std::array{x}, ops::relu(x.value())); }

Var hadamard(Var a, Var b) {
  return same_tape(a, b).record(OpKind::kHadamard, std::array{a, b},
                                ops::hadamard(a.value(), b.value()));
}

Var add(Var a, Var b) {
  return same_tape(a, b).record(OpKind::kAdd, std::array{a, b}, ops::add(a.value(), b.value()));
}

Var add_bias(Var x, Var bias) {
  return same_tape(x, bias).record(OpKind::kAddBias, std::array{x, bias},
                                   ops::add_bias(x.value(), bias.value()));
}

Var concat_channels(Var a, Var b) {
  Tensor out = ops::concat_channels(a.value(), b.value());
  Tape::Attrs attrs;
  attrs.a = a.value().dim(2);
  return same_tape(a, b).record(OpKind::kConcatChannels, std::array{a, b}, std::move(out), attrs);
}

Var upsample_bilinear(Var x, std::size_t h, std::size_t w) {
  Tensor out = ops::upsample_bilinear(x.value(), h, w);
  Tape::Attrs attrs;
  attrs.a = x.value().dim(0);
  attrs.b = x.value().dim(1);
  return x.tape->record(OpKind::kUpsampleBilinear, std::array{x}, std::move(out), attrs);
}

}  // namespace ad
}  // namespace cma
