#include "cma/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "cma/ops.hpp"

namespace cma::io {
namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::size_t pgm_token(const std::vector<std::uint8_t>& buf, std::size_t& pos,
                      const std::filesystem::path& path) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t value = 0;
  std::size_t digits = 0;
  while (pos < buf.size() && std::isdigit(buf[pos])) {
    value = value * 10 + (buf[pos] - '0');
    ++pos;
    ++digits;
  }
  if (digits == 0) throw IoError("malformed PGM header in " + path.string());
  return value;
}

GrayImage decode_pgm(const std::vector<std::uint8_t>& buf, const std::filesystem::path& path) {
  std::size_t pos = 2;
  GrayImage img;
  img.width = pgm_token(buf, pos, path);
  img.height = pgm_token(buf, pos, path);
  const std::size_t maxval = pgm_token(buf, pos, path);
  if (maxval == 0 || maxval > 255) throw IoError("unsupported PGM maxval in " + path.string());
  if (pos >= buf.size() || !std::isspace(buf[pos])) throw IoError("truncated PGM " + path.string());
  ++pos;
  const std::size_t n = img.width * img.height;
  if (n == 0 || buf.size() - pos < n) throw IoError("truncated PGM data in " + path.string());
  img.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                    buf.begin() + static_cast<std::ptrdiff_t>(pos + n));
  if (maxval != 255) {
    for (auto& p : img.pixels) {
      p = static_cast<std::uint8_t>(std::lround(std::min<double>(p, maxval) * 255.0 / maxval));
    }
  }
  return img;
}

GrayImage decode_png(const std::vector<std::uint8_t>& buf, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, buf.data(), buf.size())) {
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  GrayImage img;
  img.width = image.width;
  img.height = image.height;
  img.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return img;
}

void check_image(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height || image.pixels.empty()) {
    throw IoError("image buffer does not match its extents");
  }
}

}  // namespace

GrayImage read_image(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  if (buf.size() >= 2 && buf[0] == 'P' && buf[1] == '5') return decode_pgm(buf, path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (buf.size() >= 8 && std::equal(std::begin(kPngSig), std::end(kPngSig), buf.begin())) {
    return decode_png(buf, path);
  }
  throw IoError("unrecognised image format: " + path.string());
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  check_image(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  check_image(image);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

Tensor to_saliency(const GrayImage& image) {
  check_image(image);
  Tensor t(Shape{image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i] / 255.0;
  return t;
}

Tensor to_mask(const GrayImage& image) {
  check_image(image);
  Tensor t(Shape{image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i] >= 128 ? 1.0 : 0.0;
  return t;
}

GrayImage from_map(const Tensor& map) {
  require_rank(map, 2, "from_map");
  GrayImage img{map.dim(1), map.dim(0), std::vector<std::uint8_t>(map.size())};
  for (std::size_t i = 0; i < map.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(map[i], 0.0, 1.0) * 255.0));
  }
  return img;
}

Tensor resize_map(const Tensor& map, std::size_t height, std::size_t width) {
  require_rank(map, 2, "resize_map");
  const Tensor as3 = map.reshaped(Shape{map.dim(0), map.dim(1), 1});
  Tensor out = ops::upsample_bilinear(as3, height, width).reshaped(Shape{height, width});
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace cma::io
