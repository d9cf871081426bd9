#pragma once

#include <string>
#include <vector>

namespace vidpriv::cli {

/// Default output root when --out is not given.
inline constexpr const char* kOutputRootEnv = "VIDPRIV_OUTPUT_ROOT";

/// Runs the command line; returns the process exit status (0 on success,
/// 1 on runtime errors, 2 on usage errors).
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace vidpriv::cli
