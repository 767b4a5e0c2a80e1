#include "cma/toymodel/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace cma::toy {
namespace {

using Rng = std::mt19937_64;

enum class ShapeKind { kEllipse, kRect, kTriangle };

struct Blob {
  ShapeKind kind;
  double cy, cx, ry, rx, angle;
  std::array<double, 3> colour;

  bool contains(double y, double x) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dy = y - cy, dx = x - cx;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    switch (kind) {
      case ShapeKind::kEllipse: return u * u + v * v <= 1.0;
      case ShapeKind::kRect: return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
      case ShapeKind::kTriangle: return v <= 1.0 && v >= 2.0 * std::abs(u) - 1.0;
    }
    return false;
  }
};

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Blob random_blob(Rng& rng, double h, double w) {
  Blob b;
  b.kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
  b.ry = uniform(rng, 0.12, 0.24) * h;
  b.rx = uniform(rng, 0.12, 0.24) * w;
  b.cy = uniform(rng, b.ry, h - b.ry);
  b.cx = uniform(rng, b.rx, w - b.rx);
  b.angle = uniform(rng, 0.0, std::numbers::pi);
  for (auto& c : b.colour) c = uniform(rng, 0.1, 0.9);
  return b;
}

Sample make_scene(Rng& rng, std::size_t h, std::size_t w) {
  const double hd = static_cast<double>(h), wd = static_cast<double>(w);
  std::normal_distribution<double> noise(0.0, 0.03);

  // Background: colour ramp plus an oriented stripe texture.
  std::array<double, 3> base0{}, base1{}, stripe{};
  for (std::size_t c = 0; c < 3; ++c) {
    base0[c] = uniform(rng, 0.2, 0.8);
    base1[c] = uniform(rng, 0.2, 0.8);
    stripe[c] = uniform(rng, -0.15, 0.15);
  }
  const double freq = uniform(rng, 0.3, 1.2), theta = uniform(rng, 0.0, std::numbers::pi);
  const double far0 = uniform(rng, 0.1, 0.2), far1 = uniform(rng, 0.25, 0.35);

  std::vector<Blob> blobs;
  const int distractors = std::uniform_int_distribution<int>(1, 2)(rng);
  for (int i = 0; i < distractors; ++i) blobs.push_back(random_blob(rng, hd, wd));
  Blob salient = random_blob(rng, hd, wd);
  const double salient_depth = uniform(rng, 0.75, 0.95);
  std::vector<double> distractor_depth;
  for (int i = 0; i < distractors; ++i) distractor_depth.push_back(uniform(rng, 0.3, 0.45));

  Sample s{Tensor(Shape{h, w, 3}), Tensor(Shape{h, w, 1}), Tensor(Shape{h, w})};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double py = static_cast<double>(y) + 0.5, px = static_cast<double>(x) + 0.5;
      const double t = py / hd;
      const double wave = std::sin(freq * (std::cos(theta) * px + std::sin(theta) * py));
      std::array<double, 3> rgb{};
      for (std::size_t c = 0; c < 3; ++c) rgb[c] = (1 - t) * base0[c] + t * base1[c] + stripe[c] * wave;
      double d = far0 + (far1 - far0) * t;
      for (std::size_t i = 0; i < blobs.size(); ++i) {
        if (blobs[i].contains(py, px)) {
          // Distractors sit lower in contrast against the background.
          for (std::size_t c = 0; c < 3; ++c) rgb[c] = 0.5 * blobs[i].colour[c] + 0.5 * rgb[c];
          d = distractor_depth[i];
        }
      }
      double g = 0.0;
      if (salient.contains(py, px)) {
        rgb = salient.colour;
        d = salient_depth;
        g = 1.0;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        s.aif[(y * w + x) * 3 + c] = std::clamp(rgb[c] + noise(rng), 0.0, 1.0);
      }
      s.depth[y * w + x] = std::clamp(d + noise(rng), 0.0, 1.0);
      s.gt[y * w + x] = g;
    }
  }
  return s;
}

}  // namespace

std::vector<Sample> synthetic_dataset(std::size_t count, std::uint64_t seed, std::size_t height,
                                      std::size_t width) {
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(count);
  while (out.size() < count) {
    Sample s = make_scene(rng, height, width);
    // Reject scenes where the salient shape is almost hidden by the frame.
    double fg = 0.0;
    for (double v : s.gt.data()) fg += v;
    if (fg < 0.03 * static_cast<double>(height * width)) continue;
    out.push_back(std::move(s));
  }
  return out;
}

Split split_dataset(std::vector<Sample> samples, double test_fraction) {
  const std::size_t n = samples.size();
  std::size_t n_test = static_cast<std::size_t>(std::lround(static_cast<double>(n) * test_fraction));
  if (n > 1 && test_fraction > 0.0) n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  if (n <= 1) n_test = 0;
  Split split;
  const auto cut = samples.begin() + static_cast<std::ptrdiff_t>(n - n_test);
  split.train.assign(std::make_move_iterator(samples.begin()), std::make_move_iterator(cut));
  split.test.assign(std::make_move_iterator(cut), std::make_move_iterator(samples.end()));
  return split;
}

}  // namespace cma::toy
