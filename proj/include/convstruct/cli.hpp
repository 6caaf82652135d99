#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace convstruct {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitDiverged = 3,
};

// Entry point behind the `convstruct` binary. `args` excludes the program
// name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace convstruct
