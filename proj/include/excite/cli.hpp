#pragma once

namespace excite::cli {

/// Full command-line entry point. Subcommands: sensitivity, optimize,
/// identify, rank. Returns the process exit code: 0 on success, 1 on
/// runtime/model errors, 2 on configuration errors.
int run(int argc, const char* const* argv);

}  // namespace excite::cli
