#pragma once

#include <stdexcept>
#include <string>

namespace ncssl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidDimension : public Error {
public:
    using Error::Error;
};

/// An input violated a documented precondition (symmetry, orthonormality, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

class NotPsdError : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

/// Requested a quantity the underlying result does not cover for this mode/range.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

class DegenerateInput : public Error {
public:
    using Error::Error;
};

/// A trajectory left the finite range. `at` is the time (flows) or step index (GD).
class BlowUpError : public Error {
public:
    BlowUpError(const std::string& what, double at) : Error(what), at_(at) {}
    double at() const noexcept { return at_; }

private:
    double at_;
};

}  // namespace ncssl
