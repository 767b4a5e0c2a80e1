#include "cma/toymodel/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "cma/losses.hpp"
#include "cma/simd.hpp"

namespace cma::toy {

double sample_gradients(const ToyModel& model, const Sample& sample, std::vector<Tensor>& grads) {
  Tape tape;
  const auto vars = model.bind(tape, true);
  const auto heads = model.forward(tape, vars, sample);
  Var loss = losses::hybrid_loss(heads, sample.gt);
  tape.backward(loss);
  grads.resize(vars.size());
  for (std::size_t i = 0; i < vars.size(); ++i) grads[i] = tape.grad(vars[i]);
  return loss.value().item();
}

double dataset_loss(const ToyModel& model, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    Tape tape;
    const auto vars = model.bind(tape, false);
    total += losses::hybrid_loss(model.forward(tape, vars, s), s.gt).value().item();
  }
  return total / static_cast<double>(samples.size());
}

metrics::MetricReport evaluate_model(const ToyModel& model, std::span<const Sample> samples) {
  std::vector<metrics::EvalPair> pairs;
  pairs.reserve(samples.size());
  for (const auto& s : samples) pairs.push_back({model.predict_final(s), s.gt});
  return metrics::evaluate(pairs);
}

TrainResult train(ToyModel& model, std::span<const Sample> train, std::span<const Sample> test,
                  const TrainOptions& options) {
  if (train.empty()) throw ContractError("train: empty training set");
  const ToyConfig& cfg = model.config();
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  auto& params = model.params();
  AdamState state;
  TrainResult result;
  result.initial_loss = dataset_loss(model, train);
  std::vector<Tensor> sum(params.size()), g, values(params.size());

  const std::size_t batches_per_epoch = (train.size() + cfg.batch - 1) / cfg.batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps && result.steps >= cfg.max_steps) break;
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.lr_at(epoch);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      if (cfg.max_steps && result.steps >= cfg.max_steps) break;
      const std::size_t lo = b * cfg.batch, hi = std::min(train.size(), lo + cfg.batch);
      double batch_loss = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        batch_loss += sample_gradients(model, train[order[i]], g);
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (i == lo) {
            sum[k] = std::move(g[k]);
          } else {
            simd::add(g[k].data(), sum[k].data());
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(hi - lo);
      for (auto& t : sum) {
        for (auto& v : t.data()) v *= inv;
      }
      for (std::size_t k = 0; k < values.size(); ++k) values[k] = std::move(params.entries()[k].value);
      adam_step(values, sum, state, lr);
      for (std::size_t k = 0; k < values.size(); ++k) params.entries()[k].value = std::move(values[k]);
      ++result.steps;
      batch_loss *= inv;
      result.step_losses.push_back(batch_loss);
      epoch_loss += batch_loss;
      ++epoch_steps;
    }
    if (epoch_steps == 0) break;

    const bool last = epoch + 1 == cfg.epochs || (cfg.max_steps && result.steps >= cfg.max_steps);
    EpochRecord rec{epoch + 1, result.steps, epoch_loss / static_cast<double>(epoch_steps)};
    if (!test.empty() && (options.eval_every_epoch || last)) {
      result.test_report = evaluate_model(model, test);
      rec.mae = result.test_report.mae;
      rec.f_beta = result.test_report.f_beta;
      rec.s_alpha = result.test_report.s_alpha;
      rec.e_phi = result.test_report.e_phi;
    }
    result.trace.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }
  result.final_loss = dataset_loss(model, train);
  return result;
}

void write_trace_csv(std::ostream& out, std::span<const EpochRecord> trace) {
  out << "epoch,step,loss,mae,f_beta,s_alpha,e_phi\n";
  char buf[256];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.step, r.loss, r.mae,
                  r.f_beta, r.s_alpha, r.e_phi);
    out << buf;
  }
}

double loss_reduction(std::span<const double> step_losses, std::size_t k) {
  if (step_losses.empty()) return 0.0;
  k = std::max<std::size_t>(1, std::min(k, step_losses.size()));
  const double first = std::accumulate(step_losses.begin(), step_losses.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
  const double last = std::accumulate(step_losses.end() - static_cast<std::ptrdiff_t>(k), step_losses.end(), 0.0);
  return 1.0 - last / first;
}

}  // namespace cma::toy
