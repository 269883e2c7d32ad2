#pragma once

#include <stdexcept>
#include <string>

namespace saf {

/// Base class for every error thrown by this library.  Catching saf::Error
/// is sufficient to intercept anything the engine raises on its own.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Operand shapes are incompatible with the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A configuration value is out of its documented range or inconsistent
/// with another value (e.g. mask length >= window length).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A computation produced a non-finite value.  Raised eagerly by the tape
/// after each operation so the offending op is named, not a downstream one.
class NumericError : public Error {
public:
    using Error::Error;
};

/// An API contract was violated at runtime: backward() on a non-scalar,
/// sgd_step on a parameter that never received a gradient, mixing tensors
/// across tapes, and similar misuse.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Test-time self-adaptation produced a non-finite loss or parameter.
/// Carries the adaptation rate that caused the divergence so sweeps can
/// report which candidate failed.
class AdaptationError : public Error {
public:
    AdaptationError(double rate, const std::string& what) : Error(what), rate_(rate) {}
    double rate() const { return rate_; }

private:
    double rate_;
};

/// Malformed input text (CSV, JSON sidecar, config file).  The message
/// carries file name and line where available.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure: unreadable path, short read, failed rename.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace saf
