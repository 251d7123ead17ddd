#pragma once

// The `linkinfer` command line, as a library so tests can drive it in-process.

#include <iosfwd>
#include <span>
#include <string>

namespace linkinfer::cli {

enum ExitCode : int {
  kSuccess = 0,
  kFatal = 1,
  kPartial = 2,
};

/// Runs one invocation. `args` includes the program name as args[0].
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// Riddle ids become file names: anything outside [A-Za-z0-9._-] turns into '_'.
std::string file_stem_for(const std::string& riddle_id);

}  // namespace linkinfer::cli
