#pragma once

#include <stdexcept>
#include <string>

namespace spinbath {

// Validation failures (bad specs, malformed files, domain violations) use
// std::invalid_argument directly.  numeric_error marks failures of a numeric
// procedure on valid input: tolerance not reached, fit divergence, unresolved
// correlation time.  The CLI maps invalid_argument -> exit 1, numeric_error -> exit 2.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spinbath
