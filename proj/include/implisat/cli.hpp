#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace implisat {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,       // bad flags or invalid configuration
    kExitData = 3,        // any other library error about the input data
    kExitDivergence = 4,
    kExitInternal = 5,
};

/// Runs one command line (without the program name) and returns its exit
/// code. Normal output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace implisat
