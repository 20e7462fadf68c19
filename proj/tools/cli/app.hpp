#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mrf::cli {

// Runs one `mrf` invocation. Returns the process exit code: 0 on success,
// 1 for validation or runtime failures (one "error[category]: ..." line on
// `err`), 2 for usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mrf::cli
