#include "cma/toymodel/model.hpp"

#include <stdexcept>

#include "cma/ops.hpp"

namespace cma::toy {
namespace {

constexpr std::array<const char*, 2> kBranches{"aif", "dep"};
constexpr std::array<std::size_t, 3> kDilations{1, 2, 3};

std::string stage_name(std::size_t s) { return "s" + std::to_string(s + 2); }

/// Resolves parameter names to tape leaves for one forward pass.
class Binding {
 public:
  Binding(const ParamSet& ps, std::span<const Var> vars) : ps_(ps), vars_(vars) {
    if (vars.size() != ps.size()) {
      throw std::invalid_argument("forward: " + std::to_string(vars.size()) + " bound values for " +
                                  std::to_string(ps.size()) + " parameters");
    }
  }
  Var operator()(const std::string& name) const { return vars_[ps_.index(name)]; }

 private:
  const ParamSet& ps_;
  std::span<const Var> vars_;
};

std::array<Var, 3> encode_branch(const Binding& p, Var x, const std::string& branch) {
  std::array<Var, 3> rfb{};
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string st = stage_name(s);
    x = ad::relu(ad::add_bias(ad::conv2d(x, p("enc." + branch + "." + st + ".w"), {2, 1, 1}),
                              p("enc." + branch + "." + st + ".b")));
    std::array<Var, kDilations.size()> kernels{};
    for (std::size_t d : kDilations) kernels[d - 1] = p("rfb." + branch + "." + st + ".d" + std::to_string(d));
    rfb[s] = rfb_lite(x, kernels);
  }
  return rfb;
}

Var prediction_head(const Binding& p, Var features, const std::string& head, std::size_t h,
                    std::size_t w) {
  Var logits = ad::add_bias(ad::conv2d(features, p(head + ".w")), p(head + ".b"));
  const Shape ls = logits.shape();
  if (ls[0] != h || ls[1] != w) logits = ad::upsample_bilinear(logits, h, w);
  return ad::reshape(ad::sigmoid(logits), Shape{h, w});
}

Var decoder_head(const Binding& p, Var features, std::size_t h, std::size_t w) {
  Var x = ad::relu(ad::add_bias(ad::conv2d(features, p("dec.conv.w"), {1, 1, 1}), p("dec.conv.b")));
  x = ad::relu(ad::add_bias(ad::deconv2d(x, p("dec.deconv.w"), {2, 0, 0}), p("dec.deconv.b")));
  return prediction_head(p, x, "dec.out", h, w);
}

Var concat_branches(const attention::ad::DualVars& d, bool dual) {
  return dual ? ad::concat_channels(d.aif, d.dep) : d.aif;
}

}  // namespace

Var rfb_lite(Var x, std::span<const Var> kernels) {
  if (kernels.empty()) throw ShapeError("rfb_lite: no kernels");
  Var sum{};
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    const std::size_t d = i + 1;
    Var y = ad::conv2d(x, kernels[i], {1, d, d});
    sum = i == 0 ? y : ad::add(sum, y);
  }
  return ad::relu(sum);
}

Tensor rfb_lite(const Tensor& x, std::span<const Tensor> kernels) {
  Tape tape;
  Var xv = tape.constant(x);
  std::vector<Var> ks;
  for (const auto& k : kernels) ks.push_back(tape.constant(k));
  return rfb_lite(xv, ks).value();
}

void ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  entries_.push_back({std::move(name), std::move(value)});
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::size_t ParamSet::index(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::out_of_range("unknown parameter " + std::string(name));
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

Tensor replicate_depth(const Tensor& depth) {
  require_rank(depth, 3, "replicate_depth");
  if (depth.dim(2) != 1) throw ShapeError("replicate_depth: expected one channel, got " + depth.shape().str());
  Tensor out(Shape{depth.dim(0), depth.dim(1), 3});
  for (std::size_t i = 0; i < depth.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) out[i * 3 + c] = depth[i];
  }
  return out;
}

ToyModel::ToyModel(const ToyConfig& config, Variant variant, std::uint64_t seed)
    : config_(config), variant_(variant) {
  config_.validate();
  attention::Rng rng(seed);
  const auto tr = traits(variant);
  const std::size_t nb = tr.depth_branch ? 2 : 1;
  const std::size_t c = config_.decoder_channels;
  const auto& ch = config_.channels;

  auto conv = [&](const std::string& name, std::size_t k, std::size_t cin, std::size_t cout) {
    params_.add(name, attention::he_normal(Shape{k, k, cin, cout}, k * k * cin, rng));
  };
  auto bias = [&](const std::string& name, std::size_t n) { params_.add(name, Tensor(Shape{n})); };

  for (std::size_t b = 0; b < nb; ++b) {
    const std::string br = kBranches[b];
    std::size_t cin = 3;
    for (std::size_t s = 0; s < 3; ++s) {
      const std::string st = stage_name(s);
      conv("enc." + br + "." + st + ".w", 3, cin, ch[s]);
      bias("enc." + br + "." + st + ".b", ch[s]);
      for (std::size_t d : kDilations) conv("rfb." + br + "." + st + ".d" + std::to_string(d), 3, ch[s], ch[s]);
      cin = ch[s];
    }
    conv("cat." + br + ".s2", 1, ch[0] + ch[1], c);
    conv("cat." + br + ".s3", 1, ch[1] + ch[2], c);
    conv("merge." + br, 1, 2 * c, c);
  }
  auto attention_module = [&](const std::string& m) {
    for (const std::string br : kBranches) {
      conv(m + ".gate." + br, 3, c, c);
      bias(m + ".gate_bias." + br, c);
    }
    conv(m + ".fuse", 1, 2 * c, c);
  };
  if (tr.attention_stage2) attention_module("ma1");
  if (tr.attention_stage3) attention_module("ma2");

  conv("head1.w", 1, nb * c, 1);
  bias("head1.b", 1);
  conv("head2.w", 1, nb * c, 1);
  bias("head2.b", 1);
  conv("dec.conv.w", 3, nb * c, c);
  bias("dec.conv.b", c);
  params_.add("dec.deconv.w", attention::he_normal(Shape{2, 2, c, c}, 4 * c, rng));
  bias("dec.deconv.b", c);
  conv("dec.out.w", 1, c, 1);
  bias("dec.out.b", 1);
}

std::vector<Var> ToyModel::bind(Tape& tape, bool trainable) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& e : params_.entries()) {
    vars.push_back(trainable ? tape.variable(e.value) : tape.constant(e.value));
  }
  return vars;
}

Encoded ToyModel::encode(const Sample& sample) const {
  Tape tape;
  const auto vars = bind(tape, false);
  const Binding p(params_, vars);
  Encoded enc;
  const auto aif = encode_branch(p, tape.constant(sample.aif), "aif");
  std::array<Var, 3> dep{};
  const bool dual = traits(variant_).depth_branch;
  if (dual) dep = encode_branch(p, tape.constant(replicate_depth(sample.depth)), "dep");
  for (std::size_t s = 0; s < 3; ++s) {
    enc.stages[s].aif = aif[s].value();
    if (dual) enc.stages[s].dep = dep[s].value();
    enc.stages[s].stage = static_cast<int>(s + 2);
  }
  return enc;
}

std::array<Var, 3> ToyModel::forward(Tape& tape, std::span<const Var> vars, const Sample& sample) const {
  require_rank(sample.aif, 3, "forward: aif");
  if (sample.aif.dim(0) != config_.height || sample.aif.dim(1) != config_.width || sample.aif.dim(2) != 3) {
    throw ShapeError("forward: image " + sample.aif.shape().str() + " does not match configured input " +
                     std::to_string(config_.height) + "x" + std::to_string(config_.width) + "x3");
  }
  const Binding p(params_, vars);
  const auto tr = traits(variant_);
  const std::size_t h = config_.height, w = config_.width;

  using attention::ad::DualVars;
  const auto aif = encode_branch(p, tape.constant(sample.aif), "aif");
  DualVars cat2{attention::ad::multi_level_concat(aif[0], aif[1], p("cat.aif.s2")), {}};
  DualVars cat3{attention::ad::multi_level_concat(aif[1], aif[2], p("cat.aif.s3")), {}};

  DualVars out2, out3;
  if (tr.depth_branch) {
    const auto dep = encode_branch(p, tape.constant(replicate_depth(sample.depth)), "dep");
    cat2.dep = attention::ad::multi_level_concat(dep[0], dep[1], p("cat.dep.s2"));
    cat3.dep = attention::ad::multi_level_concat(dep[1], dep[2], p("cat.dep.s3"));

    auto module = [&](const std::string& m, bool on) {
      attention::ad::ParamVars pv{};
      if (on) {
        pv = {p(m + ".gate.aif"), p(m + ".gate_bias.aif"), p(m + ".gate.dep"),
              p(m + ".gate_bias.dep"), p(m + ".fuse")};
      }
      return pv;
    };
    const attention::ad::CascadeParamVars cp{module("ma1", tr.attention_stage2),
                                             module("ma2", tr.attention_stage3), p("merge.aif"),
                                             p("merge.dep")};
    const auto cv = attention::ad::cma_forward(cat2, cat3, cp, {tr.attention_stage2, tr.attention_stage3});
    out2 = cv.out2;
    out3 = cv.out3;
  } else {
    out2 = cat2;
    out3 = {attention::ad::multi_level_concat(cat2.aif, cat3.aif, p("merge.aif")), {}};
  }

  return {prediction_head(p, concat_branches(out2, tr.depth_branch), "head1", h, w),
          prediction_head(p, concat_branches(out3, tr.depth_branch), "head2", h, w),
          decoder_head(p, concat_branches(out3, tr.depth_branch), h, w)};
}

std::array<Tensor, 3> ToyModel::predict(const Sample& sample) const {
  Tape tape;
  const auto vars = bind(tape, false);
  const auto heads = forward(tape, vars, sample);
  return {heads[0].value(), heads[1].value(), heads[2].value()};
}

}  // namespace cma::toy
