#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "cma/tensor.hpp"

// Salient-object-detection evaluation: MAE, F-measure, E-measure, S-measure,
// adaptive thresholds and 256-step F/E threshold curves.
//
// Maps are rank-2 H×W tensors. Predictions lie in [0,1]; ground truth is {0,1}.
// Thresholding at τ ∈ [0,255] keeps pixels with pred·255 ≥ τ.

namespace cma::metrics {

inline constexpr double kBetaSquared = 0.3;
inline constexpr double kAlpha = 0.5;
/// Alignment denominator guard, machine epsilon as in the reference E-measure code.
inline constexpr double kAlignEps = std::numeric_limits<double>::epsilon();
inline constexpr std::size_t kThresholds = 256;

using Curve = std::array<double, kThresholds>;

struct EvalPair {
  Tensor pred;
  Tensor gt;
};

/// Throws ShapeError on rank/extent mismatch, ContractError on out-of-range values.
void validate(const EvalPair& pair);

double mae(const EvalPair& pair);

/// (1+β²)·P·R / (β²·P + R), 0 when the denominator vanishes.
double f_beta(double precision, double recall);
double f_measure(const EvalPair& pair, double tau);

/// min(2·mean(pred)·255, 255).
double adaptive_threshold(const Tensor& pred);

/// Enhanced-alignment measure of the map binarised at tau.
double e_measure(const EvalPair& pair, double tau);
/// Same measure on the unthresholded prediction.
double e_measure_soft(const EvalPair& pair);

double s_measure(const EvalPair& pair);
/// Object-aware and region-aware halves, exposed for inspection. Both assume
/// non-degenerate ground truth.
double s_object(const EvalPair& pair);
double s_region(const EvalPair& pair);

struct ImageMetrics {
  double mae = 0.0;
  double f_beta = 0.0;  // adaptive
  double s_alpha = 0.0;
  double e_phi = 0.0;  // adaptive
  double adaptive_tau = 0.0;
  Curve f_curve{};
  Curve e_curve{};
};

struct MetricReport {
  double f_beta = 0.0;
  double s_alpha = 0.0;
  double e_phi = 0.0;
  double mae = 0.0;
  Curve f_curve{};
  Curve e_curve{};
  std::vector<ImageMetrics> per_image;
};

struct EvaluateOptions {
  /// 0 = hardware concurrency.
  std::size_t threads = 1;
};

ImageMetrics evaluate_one(const EvalPair& pair);

/// Per-image metrics averaged over the set with compensated summation in input
/// order, so the result does not depend on the thread count.
/// Throws ContractError on an empty list.
MetricReport evaluate(std::span<const EvalPair> pairs, EvaluateOptions options = {});

/// Neumaier-compensated sum.
double compensated_sum(std::span<const double> values);

}  // namespace cma::metrics
