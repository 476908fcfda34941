#pragma once

#include <stdexcept>
#include <string>

namespace ctrlp {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad arguments or configuration supplied by the caller.
class UsageError : public Error {
public:
    using Error::Error;
};

// Unreadable files, malformed rows, truncated checkpoints.
class DataError : public Error {
public:
    using Error::Error;
};

// NaN/Inf produced during a forward pass, loss or gradient.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace ctrlp
