#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cma/attention.hpp"
#include "cma/tape.hpp"
#include "cma/tensor.hpp"
#include "cma/toymodel/config.hpp"
#include "cma/toymodel/synthetic.hpp"

namespace cma::toy {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Insertion-ordered named tensors.
class ParamSet {
 public:
  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  /// Throws std::out_of_range for an unknown name.
  std::size_t index(std::string_view name) const;
  const Tensor& get(std::string_view name) const { return entries_[index(name)].value; }
  Tensor& get(std::string_view name) { return entries_[index(name)].value; }

  std::span<NamedTensor> entries() { return entries_; }
  std::span<const NamedTensor> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  /// Total number of scalars.
  std::size_t scalar_count() const;

 private:
  std::vector<NamedTensor> entries_;
};

/// Encoder output after the receptive-field blocks: stages 2, 3, 4. The depth
/// tensors are empty for the single-branch variant.
struct Encoded {
  std::array<attention::DualFeatures, 3> stages;
};

/// Three-stage dual-branch encoder, the cascade decoder and three saliency heads.
/// Head 0 reads module-1 output, head 1 reads module-2 output and head 2 is the
/// final upsampling decoder; all three produce H×W maps in (0,1).
class ToyModel {
 public:
  /// He-normal kernels and zero biases, deterministic in `seed`.
  ToyModel(const ToyConfig& config, Variant variant, std::uint64_t seed);

  Variant variant() const { return variant_; }
  const ToyConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  /// One tape leaf per parameter, in ParamSet order.
  std::vector<Var> bind(Tape& tape, bool trainable) const;
  std::array<Var, 3> forward(Tape& tape, std::span<const Var> params, const Sample& sample) const;

  std::array<Tensor, 3> predict(const Sample& sample) const;
  /// Output of the final decoder head.
  Tensor predict_final(const Sample& sample) const { return predict(sample)[2]; }
  Encoded encode(const Sample& sample) const;

 private:
  ToyConfig config_;
  Variant variant_;
  ParamSet params_;
};

/// Receptive-field block: 3×3 convolutions at dilations 1..kernels.size() with
/// matching padding, summed, then relu. Channel count follows the kernels.
Var rfb_lite(Var x, std::span<const Var> kernels);
Tensor rfb_lite(const Tensor& x, std::span<const Tensor> kernels);

/// Depth map (H×W×1) repeated into three channels.
Tensor replicate_depth(const Tensor& depth);

}  // namespace cma::toy
