#pragma once

#include <stdexcept>
#include <string>

namespace nearwave {

// Hard failure: bad input, violated precondition, unreadable file.
// CLI maps this to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A panel or subset does not meet the minimum-data threshold.
// Recoverable by --force where allowed; CLI maps this to exit code 2.
class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(const std::string& what) : Error(what) {}
};

} // namespace nearwave
