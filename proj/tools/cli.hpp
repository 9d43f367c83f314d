#pragma once

#include <iosfwd>

namespace dfdgcn::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kConfigError = 1, kDiverged = 2, kCheckFailed = 3 };

/// Runs the command line in-process, writing human-readable output to `out`
/// and diagnostics to `err`.
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace dfdgcn::cli
