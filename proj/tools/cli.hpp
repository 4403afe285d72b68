#pragma once

#include <string>
#include <vector>

namespace ttt::cli {

// Entry point of the `ttt` binary. Returns the process exit code:
// 0 success, 1 other library errors, 2 missing column, 3 empty series,
// 4 parse error, 5 bad configuration or usage, 6 fit failure, 7 I/O,
// 8 bootstrap failure.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace ttt::cli
