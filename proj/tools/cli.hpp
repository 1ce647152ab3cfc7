#pragma once

#include <iosfwd>

namespace gridflow::cli {

/// Runs one `gridflow` invocation. Exit status: 0 success, 1 user error, 2 internal failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gridflow::cli
