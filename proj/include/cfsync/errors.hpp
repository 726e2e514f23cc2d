#pragma once

#include <stdexcept>
#include <string>

namespace cfsync {

// Every failure raised by the library derives from Error so callers can
// separate "failed to compute" from verdicts that report instability.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Zero voltage where a logarithm or ratio is required.
class DomainError : public Error {
public:
    using Error::Error;
};

// Inconsistent or invalid model description (disconnected network, bad branch, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Configuration that is valid in general but outside what an analysis supports,
// e.g. heterogeneous droop gains for the fast-system matrix.
class UnsupportedConfig : public Error {
public:
    using Error::Error;
};

// Singular or ill-conditioned linear algebra, ambiguous dominance, indeterminate winding.
class NumericalError : public Error {
public:
    using Error::Error;
};

// A stated precondition of a stability criterion does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Runaway state in time integration; carries how far the integration got.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, double t_abort) : Error(what), t_abort_(t_abort) {}
    double t_abort() const noexcept { return t_abort_; }

private:
    double t_abort_;
};

}  // namespace cfsync
