#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace snapspec {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs one invocation; `args` excludes the program name.
//
//   gen-spectra | select-filters | gen-scenes | encode | train |
//   reconstruct | evaluate | export-plots | replay
//
// Every command also accepts --config FILE (key=value lines naming long flags;
// explicit flags take precedence) and writes "<out>.manifest" describing the
// run. `replay --manifest FILE` re-executes a recorded command.
int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
            std::ostream& err = std::cerr);

}  // namespace snapspec
