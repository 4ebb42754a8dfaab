#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace spa {

/// Entry point of the `spa` executable. `args` excludes the program name.
/// Returns 0 on success, 1 on a runtime failure (error JSON on `err`) and 2
/// on a command-line usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spa
