#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace adenet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Entry point. `args` excludes the program name. Machine-readable output
/// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

/// Flat `key=value` lines; `#` starts a comment. Each pair becomes a
/// `--key=value` argument of the selected subcommand, placed before the
/// command-line arguments so those take precedence.
std::vector<std::string> read_config(const std::string& path);

}  // namespace adenet::cli
