#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace evotune {

// Entry point shared by the evotune binary and the tests. `args` excludes the
// program name. Returns 0 on success, 2 on invalid input, 1 on internal errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace evotune
