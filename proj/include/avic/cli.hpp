#pragma once

#include <string>
#include <vector>

namespace avic {

// Entry point shared by the binary and the tests. Returns the process exit
// status: 0 on success, 2 for usage errors (unknown command, bad flags),
// 1 for runtime failures.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);

std::string cli_usage();

}  // namespace avic
