#pragma once

#include <stdexcept>
#include <string>

namespace irregular_sde {

// Thrown when a request would exceed the configured memory/work budget
// (e.g. Brownian grids finer than 2^30 steps, or paths * 2^L * d too large).
struct resource_error : std::runtime_error {
  explicit resource_error(const std::string& what) : std::runtime_error(what) {}
};

// Unknown preset / catalog entry; the message lists the valid names.
struct catalog_error : std::invalid_argument {
  explicit catalog_error(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace irregular_sde
