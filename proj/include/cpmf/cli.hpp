#pragma once

#include <string>
#include <vector>

namespace cpmf {

// Full command-line entry point. Returns the process exit code: 0 success,
// 1 runtime error, 2 usage error.
int run_cli(const std::vector<std::string>& args);

}  // namespace cpmf
