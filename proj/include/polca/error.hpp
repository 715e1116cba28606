#pragma once

#include <stdexcept>
#include <string>

namespace polca {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(what) {}
};

// Unrecoverable HTTP failure; status < 0 means the request never reached the
// server (connect/timeout).
struct TransportError : Error {
    TransportError(const std::string& what, int status_code)
        : Error(what), status(status_code) {}
    int status;
};

struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error(what) {}
};

}  // namespace polca
