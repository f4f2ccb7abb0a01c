#pragma once

#include <stdexcept>
#include <string>

namespace volseg {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad argument value or shape passed to an operation.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// File content does not follow the expected layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that uses a feature this toolkit does not handle.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

/// Read/write failure, including truncated payloads.
class IoError : public Error {
public:
    using Error::Error;
};

/// A pluggable component (e.g. a predictor) broke its output contract.
class ContractError : public Error {
public:
    using Error::Error;
};

} // namespace volseg
