#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cmr::cli {

// Name of the environment variable holding the default output directory.
inline constexpr const char* kOutputDirEnv = "CMR_OUTPUT_DIR";

/// Runs one command line. Returns the process exit code. Data goes to files
/// (and, for --interactive, the sampled response to `out`); diagnostics go
/// to `err`.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace cmr::cli
