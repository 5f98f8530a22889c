#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace motionseg::cli {

enum ExitCode { kOk = 0, kUnexpected = 1, kInvalidArgument = 2, kFormatError = 3, kNumericalError = 4 };

// Runs the command line in-process. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace motionseg::cli
