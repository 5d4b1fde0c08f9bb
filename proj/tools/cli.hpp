#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace splatdrive::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Parses and executes one subcommand. Normal output goes to `out`,
/// diagnostics and usage errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "original" -> 0; "shift:<meters>" -> meters. Throws InvalidInput.
double parse_trajectory(const std::string& text);

}  // namespace splatdrive::cli
