#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace privstream {

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitBelowThreshold = 1,
  kExitConfig = 2,
  kExitEmptyCalibration = 3,
  kExitDetector = 4,
};

// `args` excludes the program name: {"stream", "--spec", "s.txt", ...}.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace privstream
