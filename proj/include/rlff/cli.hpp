#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rlff {

/// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
/// 3 refused to overwrite a completed run.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace rlff
