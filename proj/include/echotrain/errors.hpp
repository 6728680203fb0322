#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace echotrain {

/// Base of every domain error raised by the library. The CLI maps these to
/// exit code 1; anything else is treated as a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input bytes. Carries the offset where parsing gave up.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Solver blew up. step() is the first step at which a non-finite value was seen.
class InstabilityError : public Error {
public:
    InstabilityError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), message_(what), step_(step) {}

    std::size_t step() const noexcept { return step_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    std::size_t step_;
};

/// Operation not allowed in the current session phase.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace echotrain
