#pragma once

#include <iosfwd>

namespace nwb::cli {

/// Exit codes of the `nwb` command.
enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2, kIo = 3 };

/// Runs the `nwb` command line. Results go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nwb::cli
