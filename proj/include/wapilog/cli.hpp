#pragma once

// The wapilog command line, callable in-process for tests.

#include <ostream>
#include <string>
#include <vector>

namespace wapilog {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;   // bad input data, halted parse, scoring mismatch
inline constexpr int config = 2;    // invalid flags or configuration
inline constexpr int io = 3;        // unreadable input or unwritable output
inline constexpr int critical = 4;  // critical quality issue with --fail-on-critical
}  // namespace exit_code

/// `args` excludes the program name. "-" as an output path means `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wapilog
