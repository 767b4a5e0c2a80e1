#pragma once

#include <cstddef>
#include <random>
#include <utility>

#include "cma/tape.hpp"
#include "cma/tensor.hpp"

// Cross-modal mutual attention between an all-in-focus (AiF) branch and a depth
// branch, and the two-module cascade built from it.
//
// For branch features aif, dep ∈ R^{H×W×C} and F(·) the C×HW flatten:
//   sim      = F(dep)ᵀ · F(aif)                      HW×HW, sim[p,q] = <dep_p, aif_q>
//   att_aif  = softmax over columns of sim             column q: weights over depth positions
//   att_dep  = softmax over columns of simᵀ
//   fused    = relu(conv1x1(concat(aif, dep)))
//   f_sim_b  = R(F(fused) · att_b)                     every output position is a convex
//                                                      combination of fused positions
//   gate_b   = sigmoid(conv3x3(f_sim_b) + bias_b)
//   ma_b     = gate_b ⊙ f_sim_b

namespace cma::attention {

using Rng = std::mt19937_64;

struct DualFeatures {
  Tensor aif;
  Tensor dep;
  int stage = 2;
};

struct AttentionParams {
  Tensor gate_kernel_aif;  // k×k×C×C
  Tensor gate_bias_aif;    // C
  Tensor gate_kernel_dep;  // k×k×C×C
  Tensor gate_bias_dep;    // C
  Tensor fuse_kernel;      // 1×1×2C×C

  /// He-normal kernels, zero biases.
  static AttentionParams he_init(std::size_t channels, Rng& rng, std::size_t gate_size = 3);
  static AttentionParams zeros(std::size_t channels, std::size_t gate_size = 3);

  std::size_t channels() const { return fuse_kernel.dim(3); }
  /// Throws ShapeError if any extent disagrees with `channels`.
  void validate(std::size_t channels) const;
};

struct AttentionOutput {
  Tensor ma_aif;
  Tensor ma_dep;
  Tensor sim;
  Tensor att_aif;
  Tensor att_dep;
  Tensor f_sim_aif;
  Tensor f_sim_dep;
  Tensor gate_aif;
  Tensor gate_dep;
  Tensor fused;
};

/// Parameters of the full cascade: one module per decoding stage plus the per-branch
/// projections that merge module-1 output with the deeper stage's features.
struct CascadeParams {
  AttentionParams stage2;
  AttentionParams stage3;
  Tensor merge_aif;  // 1×1×2C×C
  Tensor merge_dep;  // 1×1×2C×C

  static CascadeParams he_init(std::size_t channels, Rng& rng);
};

/// Which modules run; a disabled module passes its branch inputs through unchanged.
struct CascadeMode {
  bool stage2 = true;
  bool stage3 = true;
};

struct CascadeOutput {
  AttentionOutput out2;
  AttentionOutput out3;
  DualFeatures merged;  // input of the second module
};

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng);

// Value-level API.
Tensor multi_level_concat(const Tensor& f_lo, const Tensor& f_hi, const Tensor& proj);
Tensor similarity(const DualFeatures& dual);
std::pair<Tensor, Tensor> normalize_mutual(const Tensor& sim);
Tensor fuse(const DualFeatures& dual, const Tensor& fuse_kernel);
AttentionOutput mutual_attention(const DualFeatures& dual, const AttentionParams& params);
CascadeOutput cma_forward(const DualFeatures& stage2, const DualFeatures& stage3plus4,
                          const CascadeParams& params, CascadeMode mode = {});

// Tape-level API used for training and gradient checks.
namespace ad {

struct DualVars {
  Var aif;
  Var dep;
};

struct ParamVars {
  Var gate_kernel_aif;
  Var gate_bias_aif;
  Var gate_kernel_dep;
  Var gate_bias_dep;
  Var fuse_kernel;
};

struct OutputVars {
  Var ma_aif;
  Var ma_dep;
  Var sim;
  Var att_aif;
  Var att_dep;
  Var f_sim_aif;
  Var f_sim_dep;
  Var gate_aif;
  Var gate_dep;
  Var fused;
};

struct CascadeParamVars {
  ParamVars stage2;
  ParamVars stage3;
  Var merge_aif;
  Var merge_dep;
};

struct CascadeVars {
  DualVars out2;  // (ma_aif, ma_dep) of module 1 or its pass-through
  DualVars out3;
  DualVars merged;
};

ParamVars variables(Tape& tape, const AttentionParams& p);
ParamVars constants(Tape& tape, const AttentionParams& p);

Var multi_level_concat(Var f_lo, Var f_hi, Var proj);
Var similarity(DualVars dual);
std::pair<Var, Var> normalize_mutual(Var sim);
Var fuse(DualVars dual, Var fuse_kernel);
OutputVars mutual_attention(DualVars dual, const ParamVars& params);
CascadeVars cma_forward(DualVars stage2, DualVars stage3plus4, const CascadeParamVars& params,
                        CascadeMode mode = {});

}  // namespace ad
}  // namespace cma::attention
