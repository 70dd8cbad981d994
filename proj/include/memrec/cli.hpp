#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace memrec {

// Subcommands: prepare, eval, compare, serve, session. `args` excludes the
// program name. Exit status: 0 success, 1 usage error, 2 runtime failure.
int cli_dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
                 std::ostream& err);

}  // namespace memrec
