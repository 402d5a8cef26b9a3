#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace linbridge {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,  ///< verify: at least one check failed
  kExitConfig = 2,       ///< bad flags, model file, grid or endpoints
  kExitNumeric = 3,      ///< numerical failure (NotPD, singular Gamma, solver)
};

/// Runs the tool on argv-style arguments (args[0] is the program name).
/// Regular output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace linbridge
