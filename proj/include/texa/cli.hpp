#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace texa::cli {

enum ExitCode : int {
  kOk = 0,
  kBadFlags = 2,
  kIoError = 3,
  kDiverged = 4,
  kGeometry = 5,
};

/// Entry point of the `texa` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace texa::cli
