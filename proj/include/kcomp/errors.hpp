#pragma once

#include <stdexcept>
#include <string>

namespace kcomp {

// Base for all library errors. Subclasses map onto the CLI exit-code split:
// ConfigError/ValidationError -> exit 1, everything else -> exit 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration or contract misuse detected before any work runs.
struct ConfigError : Error {
    using Error::Error;
};

// A domain invariant was violated by the data (bad spans, malformed record).
struct ValidationError : Error {
    using Error::Error;
};

// Transport-level backend failure after retries were exhausted.
struct TransportError : Error {
    TransportError(const std::string& what, int attempts_made)
        : Error(what), attempts(attempts_made) {}
    int attempts = 0;
};

// The backend answered but the payload does not match the wire contract,
// or answered with a non-retryable 4xx status.
struct ProtocolError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace kcomp
