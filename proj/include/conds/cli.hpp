#pragma once

#include <string>
#include <vector>

namespace conds {

// Entry point used by both the binary and the tests.
// Returns 0 on success, 2 on validation errors, 3 on solver failures.
int run(const std::vector<std::string>& args);

}  // namespace conds
