#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace onetracker {

/// In-process CLI entry point.  `args` excludes the program name.
/// Returns 0 on success, 1 on validation/usage errors, 2 on runtime errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace onetracker
