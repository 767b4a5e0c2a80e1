#pragma once

#include <array>

#include "cma/tape.hpp"
#include "cma/tensor.hpp"

// Hybrid training objective: BCE + soft IoU + E-loss per head, summed over
// the three supervision heads with equal weights.

namespace cma::losses {

inline constexpr double kBceEps = 1e-7;
inline constexpr double kIouSmooth = 1.0;
inline constexpr double kAlignEps = 1e-8;
inline constexpr std::size_t kHeads = 3;

/// mean −[g·ln(max(p,ε)) + (1−g)·ln(max(1−p,ε))].
double bce_loss(const Tensor& p, const Tensor& g);
Tensor bce_loss_grad(const Tensor& p, const Tensor& g);

/// 1 − (Σp·g + 1) / (Σ(p + g − p·g) + 1).
double iou_loss(const Tensor& p, const Tensor& g);
Tensor iou_loss_grad(const Tensor& p, const Tensor& g);

/// 1 − E_φ(p, g) with the unthresholded prediction.
double em_loss(const Tensor& p, const Tensor& g);
Tensor em_loss_grad(const Tensor& p, const Tensor& g);

/// Throws ContractError unless g is strictly {0,1} and p lies in [0,1] with g's shape.
void check_pair(const Tensor& p, const Tensor& g, const char* what);

struct HybridTerms {
  std::array<double, kHeads> bce{};
  std::array<double, kHeads> iou{};
  std::array<double, kHeads> em{};
  double total = 0.0;
};

/// Throws ContractError when maps.size() != 3.
HybridTerms hybrid_loss(std::span<const Tensor> maps, const Tensor& g);

// Tape-recorded versions; each produces a scalar node.
Var bce_loss(Var p, const Tensor& g);
Var iou_loss(Var p, const Tensor& g);
Var em_loss(Var p, const Tensor& g);
Var hybrid_loss(std::span<const Var> maps, const Tensor& g);

}  // namespace cma::losses
