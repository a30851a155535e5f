// Command line front end. Kept callable in-process so tests can drive the
// exact code path main() uses.
#pragma once

#include <string>
#include <vector>

namespace shardfl::cli {

// Runs one command with `args` in natural order, program name excluded.
// Returns the process exit code: 0 success, 2 configuration error, 3 data
// error, 4 cache error, 5 bad removal request, 1 anything else.
int run(std::vector<std::string> args);

}  // namespace shardfl::cli
