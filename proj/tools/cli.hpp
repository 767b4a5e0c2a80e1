#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cma::cli {

enum Exit : int {
  kOk = 0,
  kCheckFailed = 1,
  kBadInput = 2,
  kIoError = 3,
  kSizeMismatch = 4,
};

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cma::cli
