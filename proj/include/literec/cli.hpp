// Operator surface: prepare -> train -> precompute -> eval / topn / bench /
// ablate, driven by a key=value config with command-line overrides.

#pragma once

#include <string>
#include <vector>

namespace literec::cli {

// argv-style arguments without the program name; returns the process exit code
int dispatch(const std::vector<std::string>& args);

}  // namespace literec::cli
