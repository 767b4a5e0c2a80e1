#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "cma/gradcheck.hpp"
#include "cma/image_io.hpp"
#include "cma/metrics.hpp"
#include "cma/toymodel/checkpoint.hpp"
#include "cma/toymodel/trainer.hpp"

namespace cma::cli {
namespace fs = std::filesystem;
namespace {

/// Raised for conditions with a dedicated exit code.
struct Failure {
  int code;
  std::string message;
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::size_t thread_budget() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CMA_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Failure{kIoError, "not a directory: " + dir.string()};
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext != ".png" && ext != ".pgm") continue;
    const auto [it, fresh] = out.emplace(entry.path().stem().string(), entry.path());
    if (!fresh) throw Failure{kBadInput, "two images share the stem '" + it->first + "' in " + dir.string()};
  }
  return out;
}

struct EvalArgs {
  std::string pred, gt, out, curves;
  bool strict = false;
};

int eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto preds = images_by_stem(a.pred);
  const auto gts = images_by_stem(a.gt);
  if (gts.empty()) throw Failure{kBadInput, "no ground-truth images in " + a.gt};

  std::vector<std::string> unpaired;
  for (const auto& [stem, path] : gts) {
    if (!preds.count(stem)) unpaired.push_back("  ground truth without prediction: " + path.filename().string());
  }
  for (const auto& [stem, path] : preds) {
    if (!gts.count(stem)) unpaired.push_back("  prediction without ground truth: " + path.filename().string());
  }
  if (!unpaired.empty()) {
    std::string msg = std::to_string(unpaired.size()) + " unpaired file(s):";
    for (const auto& line : unpaired) msg += '\n' + line;
    throw Failure{kBadInput, msg};
  }

  std::vector<std::string> names;
  std::vector<metrics::EvalPair> pairs;
  for (const auto& [stem, gt_path] : gts) {
    const auto gimg = io::read_image(gt_path);
    const auto pimg = io::read_image(preds.at(stem));
    Tensor pred = io::to_saliency(pimg);
    if (pimg.width != gimg.width || pimg.height != gimg.height) {
      const std::string msg = "size mismatch for '" + stem + "': prediction " + std::to_string(pimg.width) +
                              "x" + std::to_string(pimg.height) + ", ground truth " +
                              std::to_string(gimg.width) + "x" + std::to_string(gimg.height);
      if (a.strict) throw Failure{kSizeMismatch, msg};
      err << "warning: " << msg << "; resizing prediction\n";
      pred = io::resize_map(pred, gimg.height, gimg.width);
    }
    names.push_back(stem);
    pairs.push_back({std::move(pred), io::to_mask(gimg)});
  }

  const auto report = metrics::evaluate(pairs, {thread_budget()});
  out << "images  F_beta  S_alpha  E_phi   MAE\n";
  char row[128];
  std::snprintf(row, sizeof row, "%-6zu  %.3f   %.3f    %.3f   %.3f\n", pairs.size(), report.f_beta,
                report.s_alpha, report.e_phi, report.mae);
  out << row;

  if (!a.out.empty()) {
    std::ofstream csv(a.out);
    if (!csv) throw Failure{kIoError, "cannot write " + a.out};
    csv << "image,f_beta,s_alpha,e_phi,mae\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& m = report.per_image[i];
      csv << names[i] << ',' << fixed(m.f_beta, 6) << ',' << fixed(m.s_alpha, 6) << ',' << fixed(m.e_phi, 6)
          << ',' << fixed(m.mae, 6) << '\n';
    }
    csv << "mean," << fixed(report.f_beta, 6) << ',' << fixed(report.s_alpha, 6) << ','
        << fixed(report.e_phi, 6) << ',' << fixed(report.mae, 6) << '\n';
  }
  if (!a.curves.empty()) {
    std::ofstream csv(a.curves);
    if (!csv) throw Failure{kIoError, "cannot write " + a.curves};
    csv << "threshold,f_measure,e_measure\n";
    for (std::size_t t = 0; t < metrics::kThresholds; ++t) {
      csv << t << ',' << fixed(report.f_curve[t], 6) << ',' << fixed(report.e_curve[t], 6) << '\n';
    }
  }
  return kOk;
}

struct TrainArgs {
  std::string variant = "cma";
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "runs";
  bool ablate_all = false;
};

toy::ToyConfig train_config(const TrainArgs& a) {
  toy::ToyConfig cfg;
  if (!a.config.empty()) cfg = toy::load_config(a.config);
  std::string extra;
  for (const auto& kv : a.overrides) extra += kv + '\n';
  cfg = toy::parse_config(extra, cfg);
  if (a.seed_set) cfg.seed = a.seed;
  return cfg;
}

int train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto cfg = train_config(a);
  std::vector<toy::Variant> variants;
  if (a.ablate_all) {
    variants.assign(toy::all_variants().begin(), toy::all_variants().end());
  } else {
    variants.push_back(toy::parse_variant(a.variant));
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw Failure{kIoError, "cannot create " + a.out + ": " + ec.message()};

  auto split = toy::split_dataset(toy::synthetic_dataset(cfg.samples, cfg.seed, cfg.height, cfg.width),
                                  cfg.test_fraction);
  out << "variant  params  steps  loss_drop  F_beta  S_alpha  E_phi   MAE\n";
  std::ostringstream table;
  table << "variant,params,steps,loss_reduction,f_beta,s_alpha,e_phi,mae\n";
  for (auto v : variants) {
    toy::ToyModel model(cfg, v, cfg.seed);
    const auto result = toy::train(model, split.train, split.test);
    const std::string name(toy::variant_name(v));
    {
      std::ofstream csv(fs::path(a.out) / ("trace_" + name + ".csv"));
      if (!csv) throw Failure{kIoError, "cannot write trace in " + a.out};
      toy::write_trace_csv(csv, result.trace);
    }
    toy::save_checkpoint(fs::path(a.out) / (name + ".ckpt"), model.params());
    const auto& r = result.test_report;
    const double drop = result.loss_reduction();
    char row[160];
    std::snprintf(row, sizeof row, "%-7s  %6zu  %5zu  %8.1f%%  %.3f   %.3f    %.3f   %.3f\n", name.c_str(),
                  model.parameter_count(), result.steps, 100.0 * drop, r.f_beta, r.s_alpha, r.e_phi, r.mae);
    out << row << std::flush;
    table << name << ',' << model.parameter_count() << ',' << result.steps << ',' << fixed(drop, 6) << ','
          << fixed(r.f_beta, 6) << ',' << fixed(r.s_alpha, 6) << ',' << fixed(r.e_phi, 6) << ','
          << fixed(r.mae, 6) << '\n';
  }
  if (a.ablate_all) {
    std::ofstream csv(fs::path(a.out) / "ablation.csv");
    if (!csv) throw Failure{kIoError, "cannot write ablation table in " + a.out};
    csv << table.str();
  }
  (void)err;
  return kOk;
}

int gradcheck(std::uint64_t seed, std::size_t instances, const std::string& corrupt, std::ostream& out) {
  if (!corrupt.empty()) {
    const auto op = gradcheck::parse_op(corrupt);
    if (!op) throw Failure{kBadInput, "unknown op for --corrupt: " + corrupt};
    set_backward_fault(op);
  }
  const auto report = gradcheck::run(seed, instances);
  set_backward_fault(std::nullopt);
  char row[160];
  out << "op                  worst_rel_err  tolerance  result\n";
  for (const auto& r : report.rows) {
    std::snprintf(row, sizeof row, "%-18s  %13.3e  %9.0e  %s\n", r.name.c_str(), r.worst, r.tolerance,
                  r.pass() ? "PASS" : "FAIL");
    out << row;
  }
  std::snprintf(row, sizeof row, "%zu ops, %zu instances each, %.2f s\n", report.rows.size(), instances,
                report.seconds);
  out << row;
  return report.all_pass() ? kOk : kCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cascaded mutual attention toolkit: evaluation, toy training, gradient checks"};
  app.require_subcommand(1);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score saliency maps against ground-truth masks");
  ev->add_option("--pred", ea.pred, "Directory of predicted maps (PNG/PGM)")->required();
  ev->add_option("--gt", ea.gt, "Directory of ground-truth masks (PNG/PGM)")->required();
  ev->add_option("--out", ea.out, "Per-image CSV");
  ev->add_option("--curves", ea.curves, "F/E threshold curves CSV");
  ev->add_flag("--strict", ea.strict, "Fail on size mismatch instead of resizing");

  EvalArgs ca;
  ca.curves = "curves.csv";
  auto* cu = app.add_subcommand("curves", "Same as eval --curves; --out names the curve CSV");
  cu->add_option("--pred", ca.pred, "Directory of predicted maps (PNG/PGM)")->required();
  cu->add_option("--gt", ca.gt, "Directory of ground-truth masks (PNG/PGM)")->required();
  cu->add_option("--out,--curves", ca.curves, "F/E threshold curves CSV")->capture_default_str();
  cu->add_flag("--strict", ca.strict, "Fail on size mismatch instead of resizing");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the toy model on synthetic scenes");
  tr->add_option("--variant", ta.variant, "model1|model2|model3|model4|cma");
  tr->add_option("--config", ta.config, "key=value config file");
  tr->add_option("--set", ta.overrides, "Config override key=value (repeatable)");
  tr->add_option("--seed", ta.seed, "Data, init and shuffle seed")->each([&](const std::string&) { ta.seed_set = true; });
  tr->add_option("--out", ta.out, "Output directory");
  tr->add_flag("--ablate-all", ta.ablate_all, "Train every variant and write ablation.csv");

  std::uint64_t gc_seed = 1;
  std::size_t gc_instances = 20;
  std::string corrupt;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--instances", gc_instances, "Random instances per op");
  gc->add_option("--corrupt", corrupt, "Scale one op's backward by 1.5 (negative control)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (*ev) return eval(ea, out, err);
    if (*cu) return eval(ca, out, err);
    if (*tr) return train(ta, out, err);
    if (*gc) return gradcheck(gc_seed, gc_instances, corrupt, out);
  } catch (const Failure& f) {
    err << "error: " << f.message << '\n';
    return f.code;
  } catch (const io::IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const toy::CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kBadInput;
}

}  // namespace cma::cli
