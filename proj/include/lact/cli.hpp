#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lact::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Runs one subcommand. Messages go to out and err; the return value is the
// process exit code.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

} // namespace lact::cli
