#pragma once

#include <iosfwd>

namespace ssps {

// Full command-line entry point. Returns the process exit code: 0 on
// success, 2 for usage or config errors, 1 for runtime failures. Failures
// print one line "error: <Kind>: <message>" to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ssps
