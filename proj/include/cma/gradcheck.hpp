#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cma/tape.hpp"

// Finite-difference verification of the tape's backward passes. For a graph
// y = f(x₁..xₙ) and a random projection w, the analytic gradient of L = <w, y>
// is compared against central differences.

namespace cma::gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kPrimitiveTolerance = 1e-5;
inline constexpr double kCompositeTolerance = 1e-4;

using Rng = std::mt19937_64;
using Graph = std::function<Var(std::span<const Var>)>;

/// ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-12) over all inputs jointly.
double relative_error(const Graph& graph, std::span<const Tensor> inputs, Rng& rng, double step = kStep);

struct Row {
  std::string name;
  double worst = 0.0;
  double tolerance = 0.0;
  std::size_t instances = 0;
  bool pass() const { return worst < tolerance; }
};

struct Report {
  std::vector<Row> rows;
  double seconds = 0.0;
  bool all_pass() const;
};

/// Every primitive and the composite attention graphs on `instances` random
/// instances each.
Report run(std::uint64_t seed, std::size_t instances = 20);

/// Names accepted by the fault-injection hook ("conv2d", "softmax_columns", ...).
std::optional<OpKind> parse_op(std::string_view name);

}  // namespace cma::gradcheck
