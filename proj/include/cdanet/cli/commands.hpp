#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cdanet {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitDivergence = 4,
};

/// Runs one subcommand (gen-data, train, eval, analyze, ablate, sweep).
/// `args[0]` is the program name. Errors are reported on `err` and mapped
/// to exit codes; nothing is thrown.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cdanet
