#include "cma/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "cma/attention.hpp"
#include "cma/losses.hpp"

namespace cma::gradcheck {
namespace {

struct Instance {
  std::vector<Tensor> inputs;
  Graph graph;
};

struct Case {
  std::string name;
  double tolerance;
  std::function<Instance(Rng&)> make;
};

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor normal(Shape s, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor t(s);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

Tensor uniform(Shape s, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(s);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

/// Values bounded away from zero so relu never straddles its kink.
Tensor off_kink(Shape s, Rng& rng) {
  Tensor t = uniform(s, rng, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data()) {
    if (sign(rng)) v = -v;
  }
  return t;
}

Tensor binary_mixed(Shape s, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  Tensor t(s);
  for (auto& v : t.data()) v = coin(rng) ? 1.0 : 0.0;
  t[0] = 1.0;
  t[1] = 0.0;
  return t;
}

double loss_of(const Graph& graph, std::span<const Tensor> inputs, const Tensor& w) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.constant(x));
  return inner(graph(vars).value(), w);
}

Shape fmap(Rng& rng, std::size_t lo, std::size_t hi, std::size_t c) {
  return Shape{pick(rng, lo, hi), pick(rng, lo, hi), c};
}

std::vector<Case> cases() {
  std::vector<Case> cs;
  const double P = kPrimitiveTolerance, C = kCompositeTolerance;

  cs.push_back({"flatten", P, [](Rng& r) {
                  return Instance{{normal(fmap(r, 1, 4, pick(r, 1, 4)), r)},
                                  [](std::span<const Var> v) { return ad::flatten(v[0]); }};
                }});
  cs.push_back({"reshape3d", P, [](Rng& r) {
                  const std::size_t h = pick(r, 1, 4), w = pick(r, 1, 4);
                  return Instance{{normal(Shape{pick(r, 1, 4), h * w}, r)},
                                  [h, w](std::span<const Var> v) { return ad::reshape3d(v[0], h, w); }};
                }});
  cs.push_back({"reshape", P, [](Rng& r) {
                  const Shape s = fmap(r, 1, 4, pick(r, 1, 4));
                  return Instance{{normal(s, r)}, [s](std::span<const Var> v) {
                                    return ad::reshape(v[0], Shape{s[0] * s[1], s[2]});
                                  }};
                }});
  cs.push_back({"transpose", P, [](Rng& r) {
                  return Instance{{normal(Shape{pick(r, 1, 6), pick(r, 1, 6)}, r)},
                                  [](std::span<const Var> v) { return ad::transpose(v[0]); }};
                }});
  cs.push_back({"matmul", P, [](Rng& r) {
                  const std::size_t m = pick(r, 1, 6), k = pick(r, 1, 6), n = pick(r, 1, 6);
                  return Instance{{normal(Shape{m, k}, r), normal(Shape{k, n}, r)},
                                  [](std::span<const Var> v) { return ad::matmul(v[0], v[1]); }};
                }});
  cs.push_back({"softmax_columns", P, [](Rng& r) {
                  return Instance{{normal(Shape{pick(r, 1, 8), pick(r, 1, 8)}, r, 2.0)},
                                  [](std::span<const Var> v) { return ad::softmax_columns(v[0]); }};
                }});
  cs.push_back({"conv2d", P, [](Rng& r) {
                  const std::size_t k = pick(r, 0, 1) ? 3 : 1, cin = pick(r, 1, 3), cout = pick(r, 1, 3);
                  const ops::Conv2dOptions opt{pick(r, 1, 2), pick(r, 0, 1), pick(r, 1, 2)};
                  return Instance{{normal(fmap(r, 5, 7, cin), r), normal(Shape{k, k, cin, cout}, r)},
                                  [opt](std::span<const Var> v) { return ad::conv2d(v[0], v[1], opt); }};
                }});
  cs.push_back({"deconv2d", P, [](Rng& r) {
                  const std::size_t k = pick(r, 2, 3), cx = pick(r, 1, 3), cout = pick(r, 1, 3);
                  const std::size_t stride = pick(r, 1, 2);
                  const ops::Deconv2dOptions opt{stride, pick(r, 0, (k - 1) / 2), pick(r, 0, stride - 1)};
                  return Instance{{normal(fmap(r, 2, 4, cx), r), normal(Shape{k, k, cout, cx}, r)},
                                  [opt](std::span<const Var> v) { return ad::deconv2d(v[0], v[1], opt); }};
                }});
  cs.push_back({"sigmoid", P, [](Rng& r) {
                  return Instance{{normal(fmap(r, 1, 4, 2), r, 3.0)},
                                  [](std::span<const Var> v) { return ad::sigmoid(v[0]); }};
                }});
  cs.push_back({"relu", P, [](Rng& r) {
                  return Instance{{off_kink(fmap(r, 1, 4, 2), r)},
                                  [](std::span<const Var> v) { return ad::relu(v[0]); }};
                }});
  cs.push_back({"hadamard", P, [](Rng& r) {
                  const Shape s = fmap(r, 1, 4, 3);
                  return Instance{{normal(s, r), normal(s, r)},
                                  [](std::span<const Var> v) { return ad::hadamard(v[0], v[1]); }};
                }});
  cs.push_back({"add", P, [](Rng& r) {
                  const Shape s = fmap(r, 1, 4, 3);
                  return Instance{{normal(s, r), normal(s, r)},
                                  [](std::span<const Var> v) { return ad::add(v[0], v[1]); }};
                }});
  cs.push_back({"add_bias", P, [](Rng& r) {
                  const std::size_t c = pick(r, 1, 4);
                  return Instance{{normal(fmap(r, 1, 4, c), r), normal(Shape{c}, r)},
                                  [](std::span<const Var> v) { return ad::add_bias(v[0], v[1]); }};
                }});
  cs.push_back({"concat_channels", P, [](Rng& r) {
                  const std::size_t h = pick(r, 1, 4), w = pick(r, 1, 4);
                  return Instance{{normal(Shape{h, w, pick(r, 1, 3)}, r), normal(Shape{h, w, pick(r, 1, 3)}, r)},
                                  [](std::span<const Var> v) { return ad::concat_channels(v[0], v[1]); }};
                }});
  cs.push_back({"upsample_bilinear", P, [](Rng& r) {
                  const std::size_t oh = pick(r, 1, 8), ow = pick(r, 1, 8);
                  return Instance{{normal(fmap(r, 1, 4, 2), r)}, [oh, ow](std::span<const Var> v) {
                                    return ad::upsample_bilinear(v[0], oh, ow);
                                  }};
                }});
  auto loss_case = [&](const char* name, Var (*fn)(Var, const Tensor&)) {
    cs.push_back({name, P, [fn](Rng& r) {
                    const Shape s{pick(r, 2, 6), pick(r, 2, 6)};
                    Tensor g = binary_mixed(s, r);
                    return Instance{{uniform(s, r, 0.05, 0.95)},
                                    [fn, g](std::span<const Var> v) { return fn(v[0], g); }};
                  }});
  };
  loss_case("bce_loss", &losses::bce_loss);
  loss_case("iou_loss", &losses::iou_loss);
  loss_case("em_loss", &losses::em_loss);

  cs.push_back({"hybrid_loss", C, [](Rng& r) {
                  const Shape s{pick(r, 2, 6), pick(r, 2, 6)};
                  Tensor g = binary_mixed(s, r);
                  return Instance{{uniform(s, r, 0.05, 0.95), uniform(s, r, 0.05, 0.95), uniform(s, r, 0.05, 0.95)},
                                  [g](std::span<const Var> v) { return losses::hybrid_loss(v, g); }};
                }});
  cs.push_back({"multi_level_concat", C, [](Rng& r) {
                  const std::size_t h = pick(r, 2, 4), w = pick(r, 2, 4), c1 = pick(r, 1, 3), c2 = pick(r, 1, 3);
                  const std::size_t cout = pick(r, 1, 3);
                  return Instance{{normal(Shape{h, w, c1}, r), normal(Shape{pick(r, 1, h), pick(r, 1, w), c2}, r),
                                   normal(Shape{1, 1, c1 + c2, cout}, r)},
                                  [](std::span<const Var> v) {
                                    return attention::ad::multi_level_concat(v[0], v[1], v[2]);
                                  }};
                }});

  auto params = [](Rng& r, std::size_t c, std::vector<Tensor>& out) {
    const auto p = attention::AttentionParams::he_init(c, r);
    out.push_back(p.gate_kernel_aif);
    out.push_back(normal(Shape{c}, r, 0.5));
    out.push_back(p.gate_kernel_dep);
    out.push_back(normal(Shape{c}, r, 0.5));
    out.push_back(p.fuse_kernel);
  };
  auto bind = [](std::span<const Var> v, std::size_t at) {
    return attention::ad::ParamVars{v[at], v[at + 1], v[at + 2], v[at + 3], v[at + 4]};
  };
  cs.push_back({"mutual_attention", C, [params, bind](Rng& r) {
                  const std::size_t c = pick(r, 1, 3);
                  const Shape s = fmap(r, 2, 4, c);
                  std::vector<Tensor> in{normal(s, r), normal(s, r)};
                  params(r, c, in);
                  return Instance{std::move(in), [bind](std::span<const Var> v) {
                                    const auto o = attention::ad::mutual_attention({v[0], v[1]}, bind(v, 2));
                                    return ad::concat_channels(o.ma_aif, o.ma_dep);
                                  }};
                }});
  cs.push_back({"cma_forward", C, [params, bind](Rng& r) {
                  const std::size_t c = pick(r, 1, 3);
                  const Shape s2 = fmap(r, 3, 4, c);
                  const Shape s3{pick(r, 1, s2[0]), pick(r, 1, s2[1]), c};
                  std::vector<Tensor> in{normal(s2, r), normal(s2, r), normal(s3, r), normal(s3, r)};
                  params(r, c, in);
                  params(r, c, in);
                  in.push_back(normal(Shape{1, 1, 2 * c, c}, r));
                  in.push_back(normal(Shape{1, 1, 2 * c, c}, r));
                  return Instance{std::move(in), [bind](std::span<const Var> v) {
                                    const attention::ad::CascadeParamVars p{bind(v, 4), bind(v, 9), v[14], v[15]};
                                    const auto o = attention::ad::cma_forward({v[0], v[1]}, {v[2], v[3]}, p);
                                    return ad::add(ad::concat_channels(o.out2.aif, o.out2.dep),
                                                   ad::concat_channels(o.out3.aif, o.out3.dep));
                                  }};
                }});
  return cs;
}

}  // namespace

double relative_error(const Graph& graph, std::span<const Tensor> inputs, Rng& rng, double step) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  const Var out = graph(vars);
  const Tensor w = normal(out.shape(), rng);
  tape.backward(out, w);

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const Tensor& analytic = tape.grad(vars[i]);
    for (std::size_t j = 0; j < probe[i].size(); ++j) {
      const double x0 = probe[i][j];
      probe[i][j] = x0 + step;
      const double up = loss_of(graph, probe, w);
      probe[i][j] = x0 - step;
      const double down = loss_of(graph, probe, w);
      probe[i][j] = x0;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (analytic[j] - numeric) * (analytic[j] - numeric);
      a2 += analytic[j] * analytic[j];
      n2 += numeric * numeric;
    }
  }
  return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
}

bool Report::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const Row& r) { return r.pass(); });
}

Report run(std::uint64_t seed, std::size_t instances) {
  const auto start = std::chrono::steady_clock::now();
  Report report;
  for (const auto& c : cases()) {
    Row row{c.name, 0.0, c.tolerance, instances};
    for (std::size_t i = 0; i < instances; ++i) {
      Rng rng(seed * 1000003ULL + i);
      const Instance inst = c.make(rng);
      row.worst = std::max(row.worst, relative_error(inst.graph, inst.inputs, rng));
    }
    report.rows.push_back(row);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::optional<OpKind> parse_op(std::string_view name) {
  for (int k = static_cast<int>(OpKind::kFlatten); k <= static_cast<int>(OpKind::kEmLoss); ++k) {
    if (op_name(static_cast<OpKind>(k)) == name) return static_cast<OpKind>(k);
  }
  return std::nullopt;
}

}  // namespace cma::gradcheck
