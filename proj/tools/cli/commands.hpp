#pragma once

#include <iosfwd>

namespace judgebench::cli {

/// Runs one command line and returns the exit code: 0 success, 1 usage
/// error, 2 data error, 3 provider error. Results go to `out`, progress and
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace judgebench::cli
