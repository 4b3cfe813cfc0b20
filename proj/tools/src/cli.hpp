#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hdnet::cli {

/// Entry point of the `hdnet` tool. Returns the process exit status:
/// 0 success, 1 usage error, 2 data error, 3 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience overload; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hdnet::cli
