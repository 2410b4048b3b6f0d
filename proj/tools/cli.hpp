#pragma once

#include <string>
#include <vector>

namespace dpq::cli {

// Stable process exit codes.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kConfig = 4,
  kInfeasible = 5,
  kFormat = 6,
  kNumeric = 7,
  kInput = 8,
};

inline constexpr const char* kVersion = "1.0.0";

// Runs one command line (args exclude the program name). Errors are reported
// on stderr as a single line and mapped to an ExitCode.
int run(const std::vector<std::string>& args);

}  // namespace dpq::cli
