#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "cma/toymodel/model.hpp"

namespace cma::toy {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all integers little-endian:
//   "CMACKPT\0" | u32 version | u32 count |
//   count × { u32 name_len | name | u32 rank | rank × u64 dim | numel × f64 }
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& path);

/// Copies every tensor of `loaded` into `model`; names and shapes must match exactly.
void restore(ToyModel& model, const ParamSet& loaded);

}  // namespace cma::toy
