#pragma once

#include <stdexcept>
#include <string>

namespace flowcomp {

// Invalid configuration, shapes, file contents or preconditions.
// The CLI maps this to exit code 2.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: non-finite values, training divergence.
// The CLI maps this to exit code 3.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace flowcomp
