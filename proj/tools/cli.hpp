#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dqopt::cli {

// Runs one command. `args` excludes the program name. Returns 0 on success,
// 1 when the solver fails (infeasible or out of iterations), 2 on usage,
// parse or input errors. Reports and datasets go to --out, or `out` when
// --out is absent; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dqopt::cli
