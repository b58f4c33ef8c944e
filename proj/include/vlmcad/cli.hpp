#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vlmcad {

enum ExitCode : int {
  kExitOk = 0,
  kExitInfeasible = 1,  // run finished but J > 1
  kExitConfig = 2,
  kExitRuntime = 3,     // transport or simulator failure
};

// Full command-line entry point; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vlmcad
