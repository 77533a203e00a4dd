#pragma once

#include <stdexcept>
#include <string>

namespace prkit {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class ConvergenceFailure : public Error {
public:
    ConvergenceFailure(const std::string& what, double achieved_residual)
        : Error(what), achieved_residual(achieved_residual) {}
    double achieved_residual;
};

class DegenerateGradient : public Error {
public:
    using Error::Error;
};

class ModelTooLarge : public Error {
public:
    using Error::Error;
};

class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(const std::string& what, int epoch) : Error(what), epoch(epoch) {}
    int epoch;
};

class QuadratureUnstable : public Error {
public:
    using Error::Error;
};

class DomainExceeded : public Error {
public:
    using Error::Error;
};

class AllGridPointsFailed : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class NonPositiveVariance : public Error {
public:
    using Error::Error;
};

class RootFindFailure : public Error {
public:
    RootFindFailure(const std::string& what, double bracket_lo, double bracket_hi)
        : Error(what), bracket_lo(bracket_lo), bracket_hi(bracket_hi) {}
    double bracket_lo;
    double bracket_hi;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, long row, long column)
        : Error(what), row(row), column(column) {}
    long row;
    long column;
};

class MissingColumn : public Error {
public:
    using Error::Error;
};

class ChecksumMismatch : public Error {
public:
    using Error::Error;
};

class NetworkError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace prkit
