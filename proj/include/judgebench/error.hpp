#pragma once

#include <stdexcept>
#include <string>

namespace judgebench {

/// Bad command-line or configuration input. CLI exit code 1.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. CLI exit code 2.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A function was called outside its documented domain.
class PreconditionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Base for every failure that originates at a remote provider. CLI exit code 3.
class ProviderError : public std::runtime_error {
  public:
    ProviderError(const std::string& what, int status = 0) : std::runtime_error(what), status_(status) {}
    [[nodiscard]] int status() const noexcept { return status_; }

  private:
    int status_;
};

/// Retries exhausted on timeouts, 429 or 5xx.
class TransportError : public ProviderError {
  public:
    using ProviderError::ProviderError;
};

/// The provider cannot serve the requested shape of output (e.g. no token-level vectors).
class CapabilityError : public ProviderError {
  public:
    using ProviderError::ProviderError;
};

} // namespace judgebench
