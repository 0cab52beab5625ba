#pragma once

#include <stdexcept>
#include <string>

namespace smlelm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Violated preconditions: bad shapes, out-of-range labels or parameters.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown (failed factorization, non-finite objective, ...).
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace smlelm
