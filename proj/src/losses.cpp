#include "cma/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cma::losses {
namespace {

enum class GtKind { kEmpty, kFull, kMixed };

GtKind classify(const Tensor& g) {
  double s = 0.0;
  for (double v : g.data()) s += v;
  if (s == 0.0) return GtKind::kEmpty;
  if (s == static_cast<double>(g.size())) return GtKind::kFull;
  return GtKind::kMixed;
}

double mean(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s / static_cast<double>(t.size());
}

}  // namespace

void check_pair(const Tensor& p, const Tensor& g, const char* what) {
  require_same_shape(p, g, what);
  if (g.size() == 0) throw ShapeError(std::string(what) + ": empty map");
  for (double v : g.data()) {
    if (v != 0.0 && v != 1.0) throw ContractError(std::string(what) + ": ground truth not binary");
  }
  for (double v : p.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError(std::string(what) + ": prediction outside [0,1]");
  }
}

double bce_loss(const Tensor& p, const Tensor& g) {
  check_pair(p, g, "bce_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    s -= g[i] * std::log(std::max(p[i], kBceEps)) + (1.0 - g[i]) * std::log(std::max(1.0 - p[i], kBceEps));
  }
  return s / static_cast<double>(p.size());
}

Tensor bce_loss_grad(const Tensor& p, const Tensor& g) {
  check_pair(p, g, "bce_loss");
  const double inv_n = 1.0 / static_cast<double>(p.size());
  Tensor d(p.shape());
  for (std::size_t i = 0; i < p.size(); ++i) {
    // Zero slope where the clamp is active.
    const double pos = p[i] > kBceEps ? g[i] / p[i] : 0.0;
    const double neg = 1.0 - p[i] > kBceEps ? (1.0 - g[i]) / (1.0 - p[i]) : 0.0;
    d[i] = -inv_n * (pos - neg);
  }
  return d;
}

double iou_loss(const Tensor& p, const Tensor& g) {
  check_pair(p, g, "iou_loss");
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * g[i];
    uni += p[i] + g[i] - p[i] * g[i];
  }
  return 1.0 - (inter + kIouSmooth) / (uni + kIouSmooth);
}

Tensor iou_loss_grad(const Tensor& p, const Tensor& g) {
  check_pair(p, g, "iou_loss");
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * g[i];
    uni += p[i] + g[i] - p[i] * g[i];
  }
  const double num = inter + kIouSmooth, den = uni + kIouSmooth;
  Tensor d(p.shape());
  // d/dp_i of -(num/den) = -(g_i·den - num·(1 - g_i)) / den²
  for (std::size_t i = 0; i < p.size(); ++i) {
    d[i] = -(g[i] * den - num * (1.0 - g[i])) / (den * den);
  }
  return d;
}

double em_loss(const Tensor& p, const Tensor& g) {
  check_pair(p, g, "em_loss");
  switch (classify(g)) {
    case GtKind::kEmpty:
      return mean(p);
    case GtKind::kFull:
      return 1.0 - mean(p);
    case GtKind::kMixed:
      break;
  }
  const double mp = mean(p), mg = mean(g);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = g[i] - mg, b = p[i] - mp;
    const double align = 2.0 * a * b / (a * a + b * b + kAlignEps);
    s += (align + 1.0) * (align + 1.0) / 4.0;
  }
  return 1.0 - s / static_cast<double>(p.size());
}

Tensor em_loss_grad(const Tensor& p, const Tensor& g) {
  check_pair(p, g, "em_loss");
  const double inv_n = 1.0 / static_cast<double>(p.size());
  Tensor d(p.shape());
  switch (classify(g)) {
    case GtKind::kEmpty:
      for (auto& v : d.data()) v = inv_n;
      return d;
    case GtKind::kFull:
      for (auto& v : d.data()) v = -inv_n;
      return d;
    case GtKind::kMixed:
      break;
  }
  const double mp = mean(p), mg = mean(g);
  // u_i = dE/d(ξP_i); the demeaning step maps it to dE/dp_j = u_j - mean(u).
  double mean_u = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = g[i] - mg, b = p[i] - mp;
    const double den = a * a + b * b + kAlignEps;
    const double align = 2.0 * a * b / den;
    const double dalign = 2.0 * a * (a * a - b * b + kAlignEps) / (den * den);
    d[i] = inv_n * 0.5 * (align + 1.0) * dalign;
    mean_u += d[i];
  }
  mean_u *= inv_n;
  for (auto& v : d.data()) v = -(v - mean_u);
  return d;
}

HybridTerms hybrid_loss(std::span<const Tensor> maps, const Tensor& g) {
  if (maps.size() != kHeads) {
    throw ContractError("hybrid_loss: expected 3 prediction maps, got " + std::to_string(maps.size()));
  }
  HybridTerms t;
  for (std::size_t n = 0; n < kHeads; ++n) {
    t.bce[n] = bce_loss(maps[n], g);
    t.iou[n] = iou_loss(maps[n], g);
    t.em[n] = em_loss(maps[n], g);
    t.total += t.bce[n] + t.iou[n] + t.em[n];
  }
  return t;
}

Var bce_loss(Var p, const Tensor& g) {
  const double v = bce_loss(p.value(), g);
  return p.tape->record(OpKind::kBceLoss, std::array{p}, Tensor::scalar(v), {}, g);
}

Var iou_loss(Var p, const Tensor& g) {
  const double v = iou_loss(p.value(), g);
  return p.tape->record(OpKind::kIouLoss, std::array{p}, Tensor::scalar(v), {}, g);
}

Var em_loss(Var p, const Tensor& g) {
  const double v = em_loss(p.value(), g);
  return p.tape->record(OpKind::kEmLoss, std::array{p}, Tensor::scalar(v), {}, g);
}

Var hybrid_loss(std::span<const Var> maps, const Tensor& g) {
  if (maps.size() != kHeads) {
    throw ContractError("hybrid_loss: expected 3 prediction maps, got " + std::to_string(maps.size()));
  }
  Var total = bce_loss(maps[0], g);
  for (std::size_t n = 0; n < kHeads; ++n) {
    if (n > 0) total = ad::add(total, bce_loss(maps[n], g));
    total = ad::add(total, iou_loss(maps[n], g));
    total = ad::add(total, em_loss(maps[n], g));
  }
  return total;
}

}  // namespace cma::losses
