#pragma once

#include <string>
#include <vector>

namespace stenonet {

/// The command-line front end (gen / train / eval / overlay / gradcheck),
/// callable in-process for tests. `args` excludes the program name. Returns
/// the process exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace stenonet
