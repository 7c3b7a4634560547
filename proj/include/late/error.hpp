#pragma once

#include <stdexcept>
#include <string>

namespace late {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad argument or malformed input (arm sizes, domains, parse failures).
class InputError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be inverted is singular or badly conditioned.
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// Rejection sampling exhausted its attempt budget.
class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, double observed_rate)
        : Error(what), observed_rate_(observed_rate) {}
    double observed_rate() const { return observed_rate_; }

private:
    double observed_rate_;
};

} // namespace late
