#pragma once

#include <string>
#include <vector>

namespace hdcam {

// Runs the command-line tool in-process. args excludes the program name.
// Exit codes: 0 success, 1 I/O, 2 config validation, 3 data/protocol,
// 4 checkpoint mismatch.
int run_cli(const std::vector<std::string>& args);

}  // namespace hdcam
