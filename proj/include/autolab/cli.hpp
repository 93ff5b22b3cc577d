#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "autolab/service.hpp"

namespace autolab {

/// Exit codes of the command-line client.
enum ExitCode : int { kExitOk = 0, kExitDomain = 1, kExitUsage = 2 };

/// Runs the command line `args` (without the program name). Errors are
/// reported as a single line on `err`. `serve` and `worker` block until
/// SIGINT or SIGTERM.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env);

}  // namespace autolab
