#include "cma/attention.hpp"

#include <cmath>
#include <tuple>
#include <string>

#include "cma/ops.hpp"

namespace cma::attention {
namespace {

void require_same_features(const Tensor& aif, const Tensor& dep, const char* what) {
  require_rank(aif, 3, what);
  require_same_shape(aif, dep, what);
}

Tensor value_of(Var v) { return v.value(); }

AttentionOutput to_values(const ad::OutputVars& o) {
  return {value_of(o.ma_aif),    value_of(o.ma_dep),    value_of(o.sim),
          value_of(o.att_aif),   value_of(o.att_dep),   value_of(o.f_sim_aif),
          value_of(o.f_sim_dep), value_of(o.gate_aif),  value_of(o.gate_dep),
          value_of(o.fused)};
}

}  // namespace

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

AttentionParams AttentionParams::he_init(std::size_t c, Rng& rng, std::size_t gate_size) {
  AttentionParams p;
  const std::size_t k = gate_size;
  p.gate_kernel_aif = he_normal(Shape{k, k, c, c}, k * k * c, rng);
  p.gate_bias_aif = Tensor(Shape{c});
  p.gate_kernel_dep = he_normal(Shape{k, k, c, c}, k * k * c, rng);
  p.gate_bias_dep = Tensor(Shape{c});
  p.fuse_kernel = he_normal(Shape{1, 1, 2 * c, c}, 2 * c, rng);
  return p;
}

AttentionParams AttentionParams::zeros(std::size_t c, std::size_t gate_size) {
  const std::size_t k = gate_size;
  return {Tensor(Shape{k, k, c, c}), Tensor(Shape{c}), Tensor(Shape{k, k, c, c}),
          Tensor(Shape{c}), Tensor(Shape{1, 1, 2 * c, c})};
}

void AttentionParams::validate(std::size_t c) const {
  auto check_gate = [c](const Tensor& k, const Tensor& b, const char* which) {
    if (k.rank() != 4 || k.dim(0) != k.dim(1) || k.dim(0) % 2 == 0 || k.dim(2) != c ||
        k.dim(3) != c) {
      throw ShapeError(std::string(which) + " gate kernel " + k.shape().str() +
                       " inconsistent with C=" + std::to_string(c));
    }
    if (!(b.shape() == Shape{c})) {
      throw ShapeError(std::string(which) + " gate bias " + b.shape().str());
    }
  };
  check_gate(gate_kernel_aif, gate_bias_aif, "aif");
  check_gate(gate_kernel_dep, gate_bias_dep, "dep");
  if (!(fuse_kernel.shape() == Shape{1, 1, 2 * c, c})) {
    throw ShapeError("fuse kernel " + fuse_kernel.shape().str() + " inconsistent with C=" +
                     std::to_string(c));
  }
}

CascadeParams CascadeParams::he_init(std::size_t c, Rng& rng) {
  CascadeParams p;
  p.stage2 = AttentionParams::he_init(c, rng);
  p.stage3 = AttentionParams::he_init(c, rng);
  p.merge_aif = he_normal(Shape{1, 1, 2 * c, c}, 2 * c, rng);
  p.merge_dep = he_normal(Shape{1, 1, 2 * c, c}, 2 * c, rng);
  return p;
}

Tensor multi_level_concat(const Tensor& f_lo, const Tensor& f_hi, const Tensor& proj) {
  Tape tape;
  return ad::multi_level_concat(tape.constant(f_lo), tape.constant(f_hi), tape.constant(proj))
      .value();
}

Tensor similarity(const DualFeatures& dual) {
  Tape tape;
  return ad::similarity({tape.constant(dual.aif), tape.constant(dual.dep)}).value();
}

std::pair<Tensor, Tensor> normalize_mutual(const Tensor& sim) {
  Tape tape;
  auto [a, d] = ad::normalize_mutual(tape.constant(sim));
  return {a.value(), d.value()};
}

Tensor fuse(const DualFeatures& dual, const Tensor& fuse_kernel) {
  Tape tape;
  return ad::fuse({tape.constant(dual.aif), tape.constant(dual.dep)}, tape.constant(fuse_kernel))
      .value();
}

AttentionOutput mutual_attention(const DualFeatures& dual, const AttentionParams& params) {
  Tape tape;
  const ad::DualVars d{tape.constant(dual.aif), tape.constant(dual.dep)};
  return to_values(ad::mutual_attention(d, ad::constants(tape, params)));
}

CascadeOutput cma_forward(const DualFeatures& stage2, const DualFeatures& stage3plus4,
                          const CascadeParams& params, CascadeMode mode) {
  Tape tape;
  const ad::DualVars s2{tape.constant(stage2.aif), tape.constant(stage2.dep)};
  const ad::DualVars s34{tape.constant(stage3plus4.aif), tape.constant(stage3plus4.dep)};

  CascadeOutput out;
  ad::DualVars first = s2;
  if (mode.stage2) {
    const auto o = ad::mutual_attention(s2, ad::constants(tape, params.stage2));
    out.out2 = to_values(o);
    first = {o.ma_aif, o.ma_dep};
  } else {
    out.out2.ma_aif = stage2.aif;
    out.out2.ma_dep = stage2.dep;
  }
  const ad::DualVars merged{
      ad::multi_level_concat(first.aif, s34.aif, tape.constant(params.merge_aif)),
      ad::multi_level_concat(first.dep, s34.dep, tape.constant(params.merge_dep))};
  out.merged = {merged.aif.value(), merged.dep.value(), 3};
  if (mode.stage3) {
    out.out3 = to_values(ad::mutual_attention(merged, ad::constants(tape, params.stage3)));
  } else {
    out.out3.ma_aif = out.merged.aif;
    out.out3.ma_dep = out.merged.dep;
  }
  return out;
}

namespace ad {

ParamVars variables(Tape& tape, const AttentionParams& p) {
  return {tape.variable(p.gate_kernel_aif), tape.variable(p.gate_bias_aif),
          tape.variable(p.gate_kernel_dep), tape.variable(p.gate_bias_dep),
          tape.variable(p.fuse_kernel)};
}

ParamVars constants(Tape& tape, const AttentionParams& p) {
  return {tape.constant(p.gate_kernel_aif), tape.constant(p.gate_bias_aif),
          tape.constant(p.gate_kernel_dep), tape.constant(p.gate_bias_dep),
          tape.constant(p.fuse_kernel)};
}

Var multi_level_concat(Var f_lo, Var f_hi, Var proj) {
  const Tensor& lo = f_lo.value();
  const Tensor& hi = f_hi.value();
  require_rank(lo, 3, "multi_level_concat low-level input");
  require_rank(hi, 3, "multi_level_concat high-level input");
  if (hi.dim(0) > lo.dim(0) || hi.dim(1) > lo.dim(1)) {
    throw ShapeError("multi_level_concat: deeper stage " + hi.shape().str() +
                     " larger than shallower " + lo.shape().str());
  }
  const Tensor& k = proj.value();
  if (k.rank() != 4 || k.dim(0) != 1 || k.dim(1) != 1 || k.dim(2) != lo.dim(2) + hi.dim(2)) {
    throw ShapeError("multi_level_concat: projection " + k.shape().str() + " vs channels " +
                     std::to_string(lo.dim(2)) + "+" + std::to_string(hi.dim(2)));
  }
  Var up = f_hi;
  if (hi.dim(0) != lo.dim(0) || hi.dim(1) != lo.dim(1)) {
    up = cma::ad::upsample_bilinear(f_hi, lo.dim(0), lo.dim(1));
  }
  return cma::ad::relu(cma::ad::conv2d(cma::ad::concat_channels(f_lo, up), proj));
}

Var similarity(DualVars dual) {
  const Tensor& a = dual.aif.value();
  require_same_features(a, dual.dep.value(), "similarity");
  const std::size_t hw = a.dim(0) * a.dim(1), c = a.dim(2);
  // F(dep)ᵀ is the H×W×C buffer read as HW×C.
  Var dep_t = cma::ad::reshape(dual.dep, Shape{hw, c});
  return cma::ad::matmul(dep_t, cma::ad::flatten(dual.aif));
}

std::pair<Var, Var> normalize_mutual(Var sim) {
  const Tensor& s = sim.value();
  require_rank(s, 2, "normalize_mutual");
  if (s.dim(0) != s.dim(1)) throw ShapeError("normalize_mutual: non-square " + s.shape().str());
  return {cma::ad::softmax_columns(sim), cma::ad::softmax_columns(cma::ad::transpose(sim))};
}

Var fuse(DualVars dual, Var fuse_kernel) {
  require_same_features(dual.aif.value(), dual.dep.value(), "fuse");
  const Tensor& k = fuse_kernel.value();
  const std::size_t c = dual.aif.value().dim(2);
  if (k.rank() != 4 || k.dim(0) != 1 || k.dim(1) != 1 || k.dim(2) != 2 * c) {
    throw ShapeError("fuse: kernel " + k.shape().str() + " vs branch channels " +
                     std::to_string(c));
  }
  return cma::ad::relu(cma::ad::conv2d(cma::ad::concat_channels(dual.aif, dual.dep), fuse_kernel));
}

OutputVars mutual_attention(DualVars dual, const ParamVars& params) {
  const Tensor& a = dual.aif.value();
  require_same_features(a, dual.dep.value(), "mutual_attention");
  const std::size_t h = a.dim(0), w = a.dim(1), c = a.dim(2);
  AttentionParams{params.gate_kernel_aif.value(), params.gate_bias_aif.value(),
                  params.gate_kernel_dep.value(), params.gate_bias_dep.value(),
                  params.fuse_kernel.value()}
      .validate(c);

  OutputVars o;
  o.sim = similarity(dual);
  std::tie(o.att_aif, o.att_dep) = normalize_mutual(o.sim);
  o.fused = fuse(dual, params.fuse_kernel);
  Var fused_flat = cma::ad::flatten(o.fused);
  o.f_sim_aif = cma::ad::reshape3d(cma::ad::matmul(fused_flat, o.att_aif), h, w);
  o.f_sim_dep = cma::ad::reshape3d(cma::ad::matmul(fused_flat, o.att_dep), h, w);

  auto gate = [](Var f, Var k, Var b) {
    const ops::Conv2dOptions same{1, k.value().dim(0) / 2, 1};
    return cma::ad::sigmoid(cma::ad::add_bias(cma::ad::conv2d(f, k, same), b));
  };
  o.gate_aif = gate(o.f_sim_aif, params.gate_kernel_aif, params.gate_bias_aif);
  o.gate_dep = gate(o.f_sim_dep, params.gate_kernel_dep, params.gate_bias_dep);
  o.ma_aif = cma::ad::hadamard(o.gate_aif, o.f_sim_aif);
  o.ma_dep = cma::ad::hadamard(o.gate_dep, o.f_sim_dep);
  return o;
}

CascadeVars cma_forward(DualVars stage2, DualVars stage3plus4, const CascadeParamVars& params,
                        CascadeMode mode) {
  CascadeVars out;
  out.out2 = stage2;
  if (mode.stage2) {
    const auto o = mutual_attention(stage2, params.stage2);
    out.out2 = {o.ma_aif, o.ma_dep};
  }
  out.merged = {multi_level_concat(out.out2.aif, stage3plus4.aif, params.merge_aif),
                multi_level_concat(out.out2.dep, stage3plus4.dep, params.merge_dep)};
  out.out3 = out.merged;
  if (mode.stage3) {
    const auto o = mutual_attention(out.merged, params.stage3);
    out.out3 = {o.ma_aif, o.ma_dep};
  }
  return out;
}

}  // namespace ad
}  // namespace cma::attention
