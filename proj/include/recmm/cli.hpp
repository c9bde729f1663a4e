#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace recmm::cli {

enum ExitCode { kOk = 0, kValidation = 2, kConvergence = 3, kIo = 4 };

/// Runs the command line `args` (without the program name). Output files are
/// written as requested; "-" or an omitted --out writes to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses "a:b:step" or "t1,t2,...".
std::vector<double> parse_times(const std::string& spec);

/// Parses a link grid such as "boxcox:0.25:1.5:0.25,log:1".
std::vector<std::string> parse_link_grid(const std::string& spec);

}  // namespace recmm::cli
