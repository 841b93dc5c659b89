#pragma once

#include <string>
#include <vector>

namespace mhx::cli {

/// Entry point behind the `mhx` binary. Returns 0 on success, 1 on
/// validation/usage errors, 2 on I/O or remote failures.
int run(std::vector<std::string> args);
int run(int argc, const char* const* argv);

} // namespace mhx::cli
