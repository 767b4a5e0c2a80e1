#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cma/tensor.hpp"

namespace cma::toy {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;  // completed steps
};

/// One bias-corrected Adam update in place. State is sized on first use.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamHyper& hyper = {});

}  // namespace cma::toy
