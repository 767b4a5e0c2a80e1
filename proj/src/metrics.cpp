#include "cma/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "cma/simd.hpp"

namespace cma::metrics {
namespace {

// Matches the reference S-measure toolbox, which uses MATLAB's eps.
constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

struct Counts {
  double tp = 0;  // F=1, G=1
  double fp = 0;  // F=1, G=0
  double fg = 0;  // |G|
  double n = 0;
};

Counts count_at(const EvalPair& pair, double tau) {
  Counts c;
  c.n = static_cast<double>(pair.gt.size());
  for (std::size_t i = 0; i < pair.gt.size(); ++i) {
    const bool f = pair.pred[i] * 255.0 >= tau;
    const bool g = pair.gt[i] != 0.0;
    c.fg += g;
    c.tp += f && g;
    c.fp += f && !g;
  }
  return c;
}

double f_from_counts(const Counts& c) {
  const double selected = c.tp + c.fp;
  const double precision = selected > 0 ? c.tp / selected : 0.0;
  const double recall = c.fg > 0 ? c.tp / c.fg : 0.0;
  return f_beta(precision, recall);
}

double enhanced(double f, double g, double mu_f, double mu_g) {
  const double a = g - mu_g, b = f - mu_f;
  const double align = 2.0 * a * b / (a * a + b * b + kAlignEps);
  return (align + 1.0) * (align + 1.0) / 4.0;
}

// The alignment of a binary map takes one of four values, so the per-pixel sum
// collapses to four class counts.
double e_from_counts(const Counts& c) {
  const double selected = c.tp + c.fp;
  if (c.fg == 0) return (c.n - selected) / c.n;
  if (c.fg == c.n) return selected / c.n;
  const double mu_f = selected / c.n, mu_g = c.fg / c.n;
  const double fn = c.fg - c.tp, tn = c.n - c.fg - c.fp;
  const double s = c.tp * enhanced(1, 1, mu_f, mu_g) + c.fp * enhanced(1, 0, mu_f, mu_g) +
                   fn * enhanced(0, 1, mu_f, mu_g) + tn * enhanced(0, 0, mu_f, mu_g);
  return s / c.n;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double object_score(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  const double mu = mean_of(values);
  double var = 0.0;
  for (double v : values) var += (v - mu) * (v - mu);
  const double sigma = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
  return 2.0 * mu / (mu * mu + 1.0 + sigma + kMachineEps);
}

double ssim_block(const EvalPair& pair, std::size_t r0, std::size_t r1, std::size_t c0,
                  std::size_t c1) {
  const std::size_t width = pair.gt.dim(1);
  const double n = static_cast<double>((r1 - r0) * (c1 - c0));
  if (n == 0) return 0.0;
  double sx = 0.0, sy = 0.0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      sx += pair.pred[r * width + c];
      sy += pair.gt[r * width + c];
    }
  }
  const double x = sx / n, y = sy / n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      const double dx = pair.pred[r * width + c] - x, dy = pair.gt[r * width + c] - y;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  }
  const double denom = n - 1.0 + kMachineEps;
  vx /= denom;
  vy /= denom;
  cxy /= denom;
  const double alpha = 4.0 * x * y * cxy;
  const double beta = (x * x + y * y) * (vx + vy);
  if (alpha != 0.0) return alpha / (beta + kMachineEps);
  if (beta == 0.0) return 1.0;
  return 0.0;
}

std::size_t thread_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  return std::max<std::size_t>(1, std::min(n, jobs));
}

}  // namespace

void validate(const EvalPair& pair) {
  require_rank(pair.pred, 2, "metric prediction");
  require_same_shape(pair.pred, pair.gt, "metric pair");
  if (pair.gt.size() == 0) throw ShapeError("metric pair: empty map");
  for (double v : pair.gt.data()) {
    if (v != 0.0 && v != 1.0) throw ContractError("ground truth is not binary");
  }
  for (double v : pair.pred.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("prediction outside [0,1]");
  }
}

double mae(const EvalPair& pair) {
  validate(pair);
  return simd::sum_abs_diff(pair.gt.data(), pair.pred.data()) / static_cast<double>(pair.gt.size());
}

double f_beta(double precision, double recall) {
  const double denom = kBetaSquared * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + kBetaSquared) * precision * recall / denom;
}

double f_measure(const EvalPair& pair, double tau) {
  validate(pair);
  return f_from_counts(count_at(pair, tau));
}

double adaptive_threshold(const Tensor& pred) {
  double s = 0.0;
  for (double v : pred.data()) s += v;
  return std::min(2.0 * (s / static_cast<double>(pred.size())) * 255.0, 255.0);
}

double e_measure(const EvalPair& pair, double tau) {
  validate(pair);
  return e_from_counts(count_at(pair, tau));
}

double e_measure_soft(const EvalPair& pair) {
  validate(pair);
  const auto p = pair.pred.data();
  const auto g = pair.gt.data();
  const double n = static_cast<double>(p.size());
  const double mu_g = mean_of(g);
  if (mu_g == 0.0) return 1.0 - mean_of(p);
  if (mu_g == 1.0) return mean_of(p);
  const double mu_p = mean_of(p);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += enhanced(p[i], g[i], mu_p, mu_g);
  return s / n;
}

double s_object(const EvalPair& pair) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < pair.gt.size(); ++i) {
    if (pair.gt[i] != 0.0) {
      fg.push_back(pair.pred[i]);
    } else {
      bg.push_back(1.0 - pair.pred[i]);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(pair.gt.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

double s_region(const EvalPair& pair) {
  const std::size_t h = pair.gt.dim(0), w = pair.gt.dim(1);
  double total = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double g = pair.gt[r * w + c];
      total += g;
      sx += g * static_cast<double>(c + 1);
      sy += g * static_cast<double>(r + 1);
    }
  }
  // 1-based centroid, rounded half away from zero; it is also the size of the
  // left/top quadrants.
  std::size_t cx = 0, cy = 0;
  if (total == 0.0) {
    cx = static_cast<std::size_t>(std::round(static_cast<double>(w) / 2.0));
    cy = static_cast<std::size_t>(std::round(static_cast<double>(h) / 2.0));
  } else {
    cx = static_cast<std::size_t>(std::round(sx / total));
    cy = static_cast<std::size_t>(std::round(sy / total));
  }
  const double area = static_cast<double>(w * h);
  const double w1 = static_cast<double>(cx * cy) / area;
  const double w2 = static_cast<double>((w - cx) * cy) / area;
  const double w3 = static_cast<double>(cx * (h - cy)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * ssim_block(pair, 0, cy, 0, cx) + w2 * ssim_block(pair, 0, cy, cx, w) +
         w3 * ssim_block(pair, cy, h, 0, cx) + w4 * ssim_block(pair, cy, h, cx, w);
}

double s_measure(const EvalPair& pair) {
  validate(pair);
  const double y = mean_of(pair.gt.data());
  if (y == 0.0) return 1.0 - mean_of(pair.pred.data());
  if (y == 1.0) return mean_of(pair.pred.data());
  const double q = kAlpha * s_object(pair) + (1.0 - kAlpha) * s_region(pair);
  return std::clamp(q, 0.0, 1.0);
}

ImageMetrics evaluate_one(const EvalPair& pair) {
  validate(pair);
  ImageMetrics m;
  m.mae = mae(pair);
  m.s_alpha = s_measure(pair);
  m.adaptive_tau = adaptive_threshold(pair.pred);
  const Counts adaptive = count_at(pair, m.adaptive_tau);
  m.f_beta = f_from_counts(adaptive);
  m.e_phi = e_from_counts(adaptive);

  // Pixel v = pred·255 passes every integer τ ≤ floor(v); bin by floor and
  // accumulate from the top to get exact counts at all 256 thresholds.
  std::array<double, kThresholds> hist_fg{}, hist_bg{};
  double fg = 0;
  for (std::size_t i = 0; i < pair.gt.size(); ++i) {
    const auto bin = static_cast<std::size_t>(std::min(std::floor(pair.pred[i] * 255.0), 255.0));
    if (pair.gt[i] != 0.0) {
      hist_fg[bin] += 1;
      fg += 1;
    } else {
      hist_bg[bin] += 1;
    }
  }
  Counts c;
  c.fg = fg;
  c.n = static_cast<double>(pair.gt.size());
  for (std::size_t t = kThresholds; t-- > 0;) {
    c.tp += hist_fg[t];
    c.fp += hist_bg[t];
    m.f_curve[t] = f_from_counts(c);
    m.e_curve[t] = e_from_counts(c);
  }
  return m;
}

double compensated_sum(std::span<const double> values) {
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::fabs(sum) >= std::fabs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

MetricReport evaluate(std::span<const EvalPair> pairs, EvaluateOptions options) {
  if (pairs.empty()) throw ContractError("evaluate: empty pair list");
  for (const auto& p : pairs) validate(p);

  MetricReport report;
  report.per_image.resize(pairs.size());
  const std::size_t workers = thread_count(options.threads, pairs.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) report.per_image[i] = evaluate_one(pairs[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < pairs.size(); i = next++) {
          report.per_image[i] = evaluate_one(pairs[i]);
        }
      });
    }
  }

  const double n = static_cast<double>(pairs.size());
  std::vector<double> column(pairs.size());
  auto average = [&](auto field) {
    for (std::size_t i = 0; i < pairs.size(); ++i) column[i] = field(report.per_image[i]);
    return compensated_sum(column) / n;
  };
  report.mae = average([](const ImageMetrics& m) { return m.mae; });
  report.f_beta = average([](const ImageMetrics& m) { return m.f_beta; });
  report.s_alpha = average([](const ImageMetrics& m) { return m.s_alpha; });
  report.e_phi = average([](const ImageMetrics& m) { return m.e_phi; });
  for (std::size_t t = 0; t < kThresholds; ++t) {
    report.f_curve[t] = average([t](const ImageMetrics& m) { return m.f_curve[t]; });
    report.e_curve[t] = average([t](const ImageMetrics& m) { return m.e_curve[t]; });
  }
  return report;
}

}  // namespace cma::metrics
