#pragma once

#include <string>
#include <vector>

namespace pointcal {

// Full CLI dispatch (argv without the program name). Returns the process
// exit code: 0 success, 1 validation/config error, 2 numerical failure,
// 3 I/O error.
int run_cli(const std::vector<std::string>& args);

}  // namespace pointcal
