#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dsam::cli {

/// Runs one `dsam` invocation. `args` excludes the program name.
/// Returns 0 on success, 1 on invalid input (flags, config keys, missing or
/// malformed files) and 2 on a runtime fault (divergence, locked output
/// directory, I/O failure).
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dsam::cli
