#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gmop::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDependency = 3,
  kValidation = 4,
  kNumeric = 5,
};

// Runs one subcommand (generate, graphs, pretrain, train, evaluate, compare). `args` excludes the
// program name. Progress goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gmop::cli
