#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vst::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

// Entry point of the `vst` binary. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vst::app
