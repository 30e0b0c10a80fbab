#pragma once

#include <string>
#include <vector>

namespace mmkd {

/// Entry point shared by the binary and the tests. Returns the process exit
/// code: 0 success, 1 configuration error, 2 numerical failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace mmkd
