#pragma once

#include <iosfwd>

namespace rfx::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kDataError = 3, kBudget = 4, kInternal = 5 };

/// Entry point of the `rfx` tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rfx::cli
