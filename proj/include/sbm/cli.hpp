#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sbm::cli {

/// Stable exit statuses.
enum Exit : int { ok = 0, gate_failure = 1, config_error = 2, numerical_abort = 3 };

/// Runs one subcommand. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sbm::cli
