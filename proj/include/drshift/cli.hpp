#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace drshift {

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 on configuration or usage errors and 2 on runtime numerical failures.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace drshift
