#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fpnseg {

// Exit codes of the command-line tool. Failures also print one line
// "<error_kind>: <message>" to the error stream.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitData = 4,
  kExitIo = 5,
  kExitCheckpoint = 6,
  kExitShape = 7,
  kExitValue = 8,
  kExitTraining = 9,
};

// Runs the tool with args[0] being the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fpnseg
