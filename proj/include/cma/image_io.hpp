#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "cma/tensor.hpp"

namespace cma::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit single-channel image, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary PGM (P5, maxval ≤ 255) or PNG of any colour type, converted to 8-bit
/// grey. The format is chosen from the file signature, not the extension.
GrayImage read_image(const std::filesystem::path& path);

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
void write_png(const std::filesystem::path& path, const GrayImage& image);

/// H×W map with values v/255.
Tensor to_saliency(const GrayImage& image);
/// H×W {0,1} mask, foreground where v ≥ 128.
Tensor to_mask(const GrayImage& image);
/// Inverse of to_saliency with rounding and clamping to [0,255].
GrayImage from_map(const Tensor& map);

/// Bilinear resize of an H×W map (half-pixel centres).
Tensor resize_map(const Tensor& map, std::size_t height, std::size_t width);

}  // namespace cma::io
