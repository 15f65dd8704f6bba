#pragma once
// Command-line front end. Exit codes: 0 success, 1 runtime error, 2 usage error.
#include <iosfwd>
#include <string>
#include <vector>

namespace scifund {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scifund
