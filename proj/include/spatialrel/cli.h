#ifndef SPATIALREL_CLI_H_
#define SPATIALREL_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace spatialrel {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Entry point of the `spatialrel` tool. `args` excludes the program name.
// Data goes to `out` (or --out files), diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spatialrel

#endif  // SPATIALREL_CLI_H_
