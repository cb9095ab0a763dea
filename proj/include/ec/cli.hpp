#pragma once

#include <string>
#include <vector>

namespace ec {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
    kExitFound = 0,
    kExitUsage = 1,
    kExitClassifier = 2,
    kExitNotFound = 3,
};

/// Entry point of the `ec` command line. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);

/// Applies the EC_LOG environment variable (trace, debug, info, warn, error, off).
void configure_logging();

}  // namespace ec
