#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cma/tensor.hpp"

namespace cma::toy {

/// One light-field-style training example: an all-in-focus colour image, a
/// depth map where brighter means nearer, and the binary saliency mask.
struct Sample {
  Tensor aif;    // H×W×3 in [0,1]
  Tensor depth;  // H×W×1 in [0,1]
  Tensor gt;     // H×W in {0,1}
};

/// Each scene holds one salient shape in front of a textured background and
/// one or two lower-contrast distractor shapes at background depth. Colour is a
/// weak cue for the salient shape; depth is a strong one.
/// Deterministic in `seed`.
std::vector<Sample> synthetic_dataset(std::size_t count, std::uint64_t seed, std::size_t height = 32,
                                      std::size_t width = 32);

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// The last round(n·test_fraction) samples (at least one when n > 1) form the test set.
Split split_dataset(std::vector<Sample> samples, double test_fraction);

}  // namespace cma::toy
