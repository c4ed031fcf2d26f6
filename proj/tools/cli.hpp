#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dreamblend::cli {

/// Environment variable consulted when --model is not given.
inline constexpr const char* kModelEnvVar = "DREAMBLEND_MODEL";

/// Runs one command line (without the program name). Results go to `out`;
/// failures print a single `dreamblend: error: ...` line to `err` and return
/// a nonzero code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dreamblend::cli
