#pragma once

#include <string>
#include <vector>

namespace s2s::cli {

// Entry point shared by the binary and the tests. Returns the process exit
// code: 0 success, 1 runtime failure, 2 input validation failure.
int run(const std::vector<std::string>& args);

}  // namespace s2s::cli
