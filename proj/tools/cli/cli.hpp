// cli.hpp - the trustbench command line
#pragma once

#include <iosfwd>

namespace trustbench::cli {

enum ExitCode : int { kSuccess = 0, kValidationError = 1, kIoError = 2 };

/// Parses argv and runs one subcommand (gen, train, eval, sweep, inject,
/// attack, report). Usage and diagnostics go to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace trustbench::cli
