#include "cma/toymodel/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cma::toy {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(std::string(key), "invalid value for " + std::string(key) + ": '" +
                                            std::string(value) + "'");
  }
  return out;
}

std::pair<std::size_t, std::size_t> parse_size(std::string_view key, std::string_view value) {
  const auto x = value.find('x');
  if (x == std::string_view::npos) {
    const auto n = parse_number<std::size_t>(key, value);
    return {n, n};
  }
  return {parse_number<std::size_t>(key, trim(value.substr(0, x))),
          parse_number<std::size_t>(key, trim(value.substr(x + 1)))};
}

}  // namespace

double ToyConfig::lr_at(std::size_t epoch) const {
  if (decay_epochs == 0) return lr;
  return lr * std::pow(lr_decay, static_cast<double>(epoch / decay_epochs));
}

void ToyConfig::validate() const {
  auto fail = [](const char* key, const char* why) {
    throw ConfigError(key, std::string("invalid value for ") + key + ": " + why);
  };
  if (height < 8 || width < 8 || height % 8 || width % 8) {
    fail("input_size", "extents must be multiples of 8 and at least 8");
  }
  for (auto c : channels) {
    if (c == 0) fail("channels", "widths must be positive");
  }
  if (decoder_channels == 0) fail("decoder_channels", "must be positive");
  if (!(lr > 0.0)) fail("lr", "must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay", "must lie in (0,1]");
  if (batch == 0) fail("batch", "must be positive");
  if (samples == 0) fail("samples", "must be positive");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) fail("test_fraction", "must lie in [0,1)");
}

ToyConfig parse_config(std::string_view text, ToyConfig cfg) {
  std::size_t line_start = 0;
  while (line_start <= text.size()) {
    auto line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = text.size();
    std::string_view line = text.substr(line_start, line_end - line_start);
    line_start = line_end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(line), "expected key=value, got '" + std::string(line) + "'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));

    if (key == "input_size") {
      std::tie(cfg.height, cfg.width) = parse_size(key, value);
    } else if (key == "channels") {
      std::array<std::size_t, 3> ch{};
      std::size_t i = 0, pos = 0;
      while (pos <= value.size()) {
        auto comma = value.find(',', pos);
        if (comma == std::string_view::npos) comma = value.size();
        if (i == 3) throw ConfigError(std::string(key), "channels needs exactly 3 widths");
        ch[i++] = parse_number<std::size_t>(key, trim(value.substr(pos, comma - pos)));
        pos = comma + 1;
      }
      if (i != 3) throw ConfigError(std::string(key), "channels needs exactly 3 widths");
      cfg.channels = ch;
    } else if (key == "decoder_channels") {
      cfg.decoder_channels = parse_number<std::size_t>(key, value);
    } else if (key == "lr") {
      cfg.lr = parse_number<double>(key, value);
    } else if (key == "lr_decay") {
      cfg.lr_decay = parse_number<double>(key, value);
    } else if (key == "decay_epochs") {
      cfg.decay_epochs = parse_number<std::size_t>(key, value);
    } else if (key == "batch") {
      cfg.batch = parse_number<std::size_t>(key, value);
    } else if (key == "epochs") {
      cfg.epochs = parse_number<std::size_t>(key, value);
    } else if (key == "max_steps") {
      cfg.max_steps = parse_number<std::size_t>(key, value);
    } else if (key == "samples") {
      cfg.samples = parse_number<std::size_t>(key, value);
    } else if (key == "test_fraction") {
      cfg.test_fraction = parse_number<double>(key, value);
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(key, value);
    } else {
      throw ConfigError(std::string(key), "unknown config key: " + std::string(key));
    }
  }
  cfg.validate();
  return cfg;
}

ToyConfig load_config(const std::filesystem::path& path, ToyConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

ToyConfig ablation_preset() {
  ToyConfig c;
  c.lr = 3e-3;
  c.epochs = 1000;
  c.max_steps = 200;
  return c;
}

std::string to_text(const ToyConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "input_size = " << c.height << 'x' << c.width << '\n'
     << "channels = " << c.channels[0] << ',' << c.channels[1] << ',' << c.channels[2] << '\n'
     << "decoder_channels = " << c.decoder_channels << '\n'
     << "lr = " << c.lr << '\n'
     << "lr_decay = " << c.lr_decay << '\n'
     << "decay_epochs = " << c.decay_epochs << '\n'
     << "batch = " << c.batch << '\n'
     << "epochs = " << c.epochs << '\n'
     << "max_steps = " << c.max_steps << '\n'
     << "samples = " << c.samples << '\n'
     << "test_fraction = " << c.test_fraction << '\n'
     << "seed = " << c.seed << '\n';
  return os.str();
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kModel1: return "model1";
    case Variant::kModel2: return "model2";
    case Variant::kModel3: return "model3";
    case Variant::kModel4: return "model4";
    case Variant::kCma: return "cma";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (auto v : all_variants()) {
    if (variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant: " + std::string(name));
}

const std::array<Variant, 5>& all_variants() {
  static constexpr std::array<Variant, 5> kAll{Variant::kModel1, Variant::kModel2,
                                               Variant::kModel3, Variant::kModel4, Variant::kCma};
  return kAll;
}

VariantTraits traits(Variant v) {
  switch (v) {
    case Variant::kModel1: return {false, false, false};
    case Variant::kModel2: return {true, false, false};
    case Variant::kModel3: return {true, true, false};
    case Variant::kModel4: return {true, false, true};
    case Variant::kCma: return {true, true, true};
  }
  return {true, true, true};
}

}  // namespace cma::toy
