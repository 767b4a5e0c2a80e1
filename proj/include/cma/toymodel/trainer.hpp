#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "cma/metrics.hpp"
#include "cma/toymodel/adam.hpp"
#include "cma/toymodel/model.hpp"

namespace cma::toy {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // optimiser steps completed so far
  double loss = 0.0;      // mean training loss over the epoch's steps
  double mae = 0.0;       // test-set metrics of the final head
  double f_beta = 0.0;
  double s_alpha = 0.0;
  double e_phi = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> trace;
  std::vector<double> step_losses;  // mean batch loss of every step
  metrics::MetricReport test_report;
  std::size_t steps = 0;
  double initial_loss = 0.0;  // mean hybrid loss over the training set before step 1
  double final_loss = 0.0;    // same, after the last step
  double loss_reduction() const { return initial_loss > 0.0 ? 1.0 - final_loss / initial_loss : 0.0; }
};

struct TrainOptions {
  /// Test-set evaluation after every epoch; when false only after the last one.
  bool eval_every_epoch = true;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mean hybrid loss of one sample and its gradient w.r.t. every parameter.
double sample_gradients(const ToyModel& model, const Sample& sample, std::vector<Tensor>& grads);

/// Minibatch Adam on `train` with per-sample gradients averaged over the batch.
/// Shuffling is seeded from the config, so a run is a pure function of its inputs.
TrainResult train(ToyModel& model, std::span<const Sample> train, std::span<const Sample> test,
                  const TrainOptions& options = {});

/// Mean hybrid loss over `samples`, forward only.
double dataset_loss(const ToyModel& model, std::span<const Sample> samples);

metrics::MetricReport evaluate_model(const ToyModel& model, std::span<const Sample> samples);

/// Header plus one row per epoch, fixed 6-decimal formatting.
void write_trace_csv(std::ostream& out, std::span<const EpochRecord> trace);

/// 1 - (mean of the last k step losses) / (mean of the first k).
double loss_reduction(std::span<const double> step_losses, std::size_t k = 5);

}  // namespace cma::toy
