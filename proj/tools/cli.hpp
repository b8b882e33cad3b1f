#ifndef EGOMATCH_TOOLS_CLI_HPP
#define EGOMATCH_TOOLS_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

namespace egomatch::cli {

/// Exit codes: 0 success, 1 usage error, 2 data or validation error.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;

/// Runs one command; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace egomatch::cli

#endif  // EGOMATCH_TOOLS_CLI_HPP
