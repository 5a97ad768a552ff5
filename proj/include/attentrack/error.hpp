#pragma once

#include <stdexcept>
#include <string>

namespace attentrack {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad box, zero-norm vector, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown, e.g. a singular innovation covariance.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed external data. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Invalid configuration (CLI flags, config file, scene script).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace attentrack
