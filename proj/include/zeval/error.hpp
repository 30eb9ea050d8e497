#pragma once

#include <stdexcept>
#include <string>

namespace zeval {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (length mismatch, empty input, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

}  // namespace zeval

namespace zeval {

/// Failure talking to, or replaying, an external model endpoint.
class RemoteError : public Error {
public:
    enum class Kind { Transport, Timeout, RateLimit, Malformed, Truncated, MissingFixture, Misconfigured };

    RemoteError(Kind kind, const std::string& what, int http_status = 0)
        : Error(what), kind_(kind), http_status_(http_status) {}

    Kind kind() const noexcept { return kind_; }
    int http_status() const noexcept { return http_status_; }

private:
    Kind kind_;
    int http_status_;
};

const char* to_string(RemoteError::Kind kind) noexcept;

}  // namespace zeval
