#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cma::toy {

/// Bad key or value in a key=value config file.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument(message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ToyConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  /// Encoder widths of stages 2, 3, 4.
  std::array<std::size_t, 3> channels{8, 16, 32};
  std::size_t decoder_channels = 8;
  double lr = 1e-4;
  double lr_decay = 0.1;
  std::size_t decay_epochs = 50;
  std::size_t batch = 16;
  std::size_t epochs = 100;
  /// Stop after this many optimiser steps; 0 = run all epochs.
  std::size_t max_steps = 0;
  std::size_t samples = 80;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;

  /// Learning rate in effect during `epoch` (0-based).
  double lr_at(std::size_t epoch) const;
  void validate() const;
};

/// Flat UTF-8 `key = value` lines; '#' starts a comment. Unknown keys throw.
ToyConfig parse_config(std::string_view text, ToyConfig base = {});
ToyConfig load_config(const std::filesystem::path& path, ToyConfig base = {});
std::string to_text(const ToyConfig& config);

/// The settings in configs/ablation.cfg: 200 steps at lr 3e-3.
ToyConfig ablation_preset();

enum class Variant { kModel1, kModel2, kModel3, kModel4, kCma };

std::string_view variant_name(Variant v);
/// Throws std::invalid_argument on an unknown name.
Variant parse_variant(std::string_view name);
const std::array<Variant, 5>& all_variants();

struct VariantTraits {
  bool depth_branch;
  bool attention_stage2;
  bool attention_stage3;
};
VariantTraits traits(Variant v);

}  // namespace cma::toy
