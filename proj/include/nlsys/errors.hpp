#pragma once

#include <stdexcept>
#include <string>

namespace nlsys {

/// Caller violated a precondition (bad index, wrong representation, invalid parameter).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation produced a non-finite value or became unstable.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace nlsys
