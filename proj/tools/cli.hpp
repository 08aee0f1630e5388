#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vidtrack::cli {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Runs one command line (without the program name). Returns the process
/// exit code; diagnostics go to `err`, reports to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vidtrack::cli
