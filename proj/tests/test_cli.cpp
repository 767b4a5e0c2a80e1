#include <doctest.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "cma/image_io.hpp"
#include "cma/metrics.hpp"
#include "support/oracles.hpp"

using namespace cma;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

/// Quantised the same way the files are, so oracles see what the CLI reads.
Tensor quantised(const Tensor& m) { return io::to_saliency(io::from_map(m)); }

struct Fixture {
  oracle::TempDir dir{"cli"};
  fs::path pred = dir / "pred";
  fs::path gt = dir / "gt";
  std::vector<Tensor> preds, gts;

  explicit Fixture(std::size_t n, std::size_t size = 16, std::uint64_t seed = 91) {
    fs::create_directories(pred);
    fs::create_directories(gt);
    oracle::Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor g = oracle::random_mask(size, size, rng);
      const Tensor p = quantised(oracle::noisy_copy(g, rng, 0.4));
      const std::string stem = "img" + std::to_string(i);
      oracle::write_map(gt / (stem + ".pgm"), g);
      io::write_png(pred / (stem + ".png"), io::from_map(p));
      preds.push_back(p);
      gts.push_back(g);
    }
  }
};

}  // namespace

TEST_CASE("eval of ground truth against itself") {
  Fixture f(4);
  const Run r = run_cli({"eval", "--pred", f.gt.string(), "--gt", f.gt.string()});
  REQUIRE(r.code == cli::kOk);
  const auto l = lines(r.out);
  REQUIRE(l.size() == 2);
  CHECK(l[0] == "images  F_beta  S_alpha  E_phi   MAE");
  CHECK(l[1] == "4       1.000   1.000    1.000   0.000");
}

TEST_CASE("eval of inverted predictions") {
  Fixture f(3);
  fs::create_directories(f.dir / "inv");
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor inv(f.gts[i].shape());
    for (std::size_t j = 0; j < inv.size(); ++j) inv[j] = 1.0 - f.gts[i][j];
    oracle::write_map(f.dir / "inv" / ("img" + std::to_string(i) + ".pgm"), inv);
  }
  const Run r = run_cli({"eval", "--pred", (f.dir / "inv").string(), "--gt", f.gt.string()});
  REQUIRE(r.code == cli::kOk);
  CHECK(lines(r.out)[1].substr(lines(r.out)[1].size() - 5) == "1.000");
}

TEST_CASE("per-image CSV and aggregate") {
  Fixture f(3);
  const fs::path csv = f.dir / "scores.csv";
  const Run r = run_cli({"eval", "--pred", f.pred.string(), "--gt", f.gt.string(), "--out", csv.string()});
  REQUIRE(r.code == cli::kOk);
  const auto l = lines(slurp(csv));
  REQUIRE(l.size() == 5);
  CHECK(l[0] == "image,f_beta,s_alpha,e_phi,mae");
  double sum[4]{};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto g = oracle::to_grid(f.gts[i]), p = oracle::to_grid(f.preds[i]);
    const double tau = oracle::adaptive_threshold(p);
    const double expect[4] = {oracle::f_measure(p, g, tau), oracle::s_measure(p, g), oracle::e_measure(p, g, tau),
                              oracle::mae(p, g)};
    std::istringstream row(l[i + 1]);
    std::string cell;
    std::getline(row, cell, ',');
    CHECK(cell == "img" + std::to_string(i));
    for (int k = 0; k < 4; ++k) {
      std::getline(row, cell, ',');
      CHECK(std::stod(cell) == doctest::Approx(expect[k]).epsilon(1e-6));
      sum[k] += std::stod(cell);
    }
  }
  std::istringstream mean(l[4]);
  std::string cell;
  std::getline(mean, cell, ',');
  CHECK(cell == "mean");
  for (int k = 0; k < 4; ++k) {
    std::getline(mean, cell, ',');
    CHECK(std::stod(cell) == doctest::Approx(sum[k] / 3.0).epsilon(1e-5));
  }
}

TEST_CASE("curve output") {
  Fixture f(2);
  const fs::path a = f.dir / "a.csv", b = f.dir / "b.csv";
  CHECK(run_cli({"eval", "--pred", f.pred.string(), "--gt", f.gt.string(), "--curves", a.string()}).code == cli::kOk);
  CHECK(run_cli({"curves", "--pred", f.pred.string(), "--gt", f.gt.string(), "--out", b.string()}).code == cli::kOk);
  const std::string text = slurp(a);
  CHECK(text == slurp(b));
  const auto l = lines(text);
  REQUIRE(l.size() == 257);
  CHECK(l[0] == "threshold,f_measure,e_measure");
  CHECK(l[1].rfind("0,", 0) == 0);
  CHECK(l[256].rfind("255,", 0) == 0);
}

TEST_CASE("directory listing order does not matter") {
  Fixture f(3);
  const Run first = run_cli({"eval", "--pred", f.pred.string(), "--gt", f.gt.string()});
  // Recreate the predictions in reverse order so directory iteration differs.
  const fs::path copy = f.dir / "copy";
  fs::create_directories(copy);
  for (int i = 2; i >= 0; --i) {
    const std::string name = "img" + std::to_string(i) + ".png";
    fs::copy_file(f.pred / name, copy / name);
  }
  CHECK(run_cli({"eval", "--pred", copy.string(), "--gt", f.gt.string()}).out == first.out);
}

TEST_CASE("exit codes") {
  Fixture f(2);
  SUBCASE("unpaired files") {
    fs::remove(f.pred / "img1.png");
    const Run r = run_cli({"eval", "--pred", f.pred.string(), "--gt", f.gt.string()});
    CHECK(r.code == cli::kBadInput);
    CHECK(r.err.find("img1.pgm") != std::string::npos);
  }
  SUBCASE("missing directory") {
    CHECK(run_cli({"eval", "--pred", (f.dir / "nope").string(), "--gt", f.gt.string()}).code == cli::kIoError);
  }
  SUBCASE("size mismatch") {
    oracle::Rng rng(92);
    io::write_png(f.pred / "img0.png", io::from_map(oracle::random_map(8, 8, rng)));
    CHECK(run_cli({"eval", "--pred", f.pred.string(), "--gt", f.gt.string(), "--strict"}).code == cli::kSizeMismatch);
    const Run lenient = run_cli({"eval", "--pred", f.pred.string(), "--gt", f.gt.string()});
    CHECK(lenient.code == cli::kOk);
    CHECK(lenient.err.find("warning") != std::string::npos);
  }
  SUBCASE("bad config key") {
    std::ofstream(f.dir / "bad.cfg") << "lr = 1e-3\nbogus_key = 4\n";
    const Run r = run_cli({"train", "--config", (f.dir / "bad.cfg").string(), "--out", (f.dir / "run").string()});
    CHECK(r.code == cli::kBadInput);
    CHECK(r.err.find("bogus_key") != std::string::npos);
  }
  SUBCASE("usage errors") {
    CHECK(run_cli({}).code == cli::kBadInput);
    CHECK(run_cli({"eval", "--pred", f.pred.string()}).code == cli::kBadInput);
    CHECK(run_cli({"train", "--variant", "model7", "--out", (f.dir / "run").string()}).code == cli::kBadInput);
  }
}

TEST_CASE("gradcheck subcommand") {
  const Run ok = run_cli({"gradcheck", "--instances", "2", "--seed", "5"});
  CHECK(ok.code == cli::kOk);
  const auto l = lines(ok.out);
  std::size_t rows = 0;
  for (const auto& line : l) rows += line.find("PASS") != std::string::npos;
  CHECK(rows >= 20);
  CHECK(ok.out.find("conv2d ") != std::string::npos);
  CHECK(ok.out.find("cma_forward") != std::string::npos);

  const Run bad = run_cli({"gradcheck", "--instances", "2", "--corrupt", "matmul"});
  CHECK(bad.code == cli::kCheckFailed);
  CHECK(bad.out.find("FAIL") != std::string::npos);
  CHECK(run_cli({"gradcheck", "--corrupt", "no_such_op"}).code == cli::kBadInput);
}

TEST_CASE("train writes deterministic artefacts") {
  oracle::TempDir dir("train");
  const std::vector<std::string> base{"train",       "--variant", "model2",    "--set", "input_size=16x16",
                                      "--set",       "samples=6", "--set",     "epochs=2", "--set",
                                      "batch=2",     "--seed",    "3"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", (dir / "a").string()});
  b.insert(b.end(), {"--out", (dir / "b").string()});
  const Run ra = run_cli(a), rb = run_cli(b);
  REQUIRE(ra.code == cli::kOk);
  REQUIRE(rb.code == cli::kOk);
  CHECK(ra.out == rb.out);
  CHECK(slurp(dir / "a" / "trace_model2.csv") == slurp(dir / "b" / "trace_model2.csv"));
  CHECK(lines(slurp(dir / "a" / "trace_model2.csv")).size() == 3);
  CHECK(fs::exists(dir / "a" / "model2.ckpt"));
}

TEST_CASE("eval throughput on 100 pairs of 256x256") {
  Fixture f(100, 256, 93);
  const auto t0 = std::chrono::steady_clock::now();
  const Run r = run_cli({"eval", "--pred", f.pred.string(), "--gt", f.gt.string(), "--curves",
                     (f.dir / "c.csv").string()});
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(r.code == cli::kOk);
  MESSAGE("eval of 100 pairs took " << s << " s");
  CHECK(s < 5.0);
}
