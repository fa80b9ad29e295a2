#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace calens::cli {

/// Process exit statuses.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kMissingInput = 2,
    kNumericFailure = 3,
    kUsage = 64,
};

/// Runs one command line (without the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace calens::cli
