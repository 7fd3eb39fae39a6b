#pragma once

#include <stdexcept>
#include <string>

namespace flowcast {

// Error taxonomy mirrors the CLI exit-code contract:
//   ConfigError -> 1 (bad user input / configuration)
//   DataError   -> 2 (malformed or insufficient data)
//   anything else -> 3 (internal)
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InternalError : std::logic_error {
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace flowcast
