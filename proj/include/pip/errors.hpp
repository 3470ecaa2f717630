#pragma once

#include <stdexcept>
#include <string>

namespace pip {

// Bad user-facing configuration: wrong directory layout, invalid or unknown
// config keys, out-of-range values. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pip
