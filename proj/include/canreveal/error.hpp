#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace canreveal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input. `line` is 1-based, 0 when unknown; `column` is the
/// 0-based offset of the offending character when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
        : Error(format(what, line, column)), line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    static std::string format(const std::string& what, std::size_t line, std::size_t column) {
        if (line == 0) return what;
        return "line " + std::to_string(line) + ", col " + std::to_string(column) + ": " + what;
    }

    std::size_t line_;
    std::size_t column_;
};

/// Invalid configuration (thresholds, schedules, scenarios, session files).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A value outside the domain of an operation (bad window, id mismatch, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Series does not span the requested resampling grid.
class CoverageError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Pearson correlation undefined because one input has zero variance.
class UndefinedCorrelation : public DomainError {
public:
    using DomainError::DomainError;
};

} // namespace canreveal
