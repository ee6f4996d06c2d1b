#pragma once

#include <stdexcept>
#include <string>

namespace evopipe {

// Thrown for malformed input files (CSV, PMLB, export artifacts, result files).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown when a model or operator cannot be fit (bad dimensions, non-finite loss,
// empty feature set). The GP treats these as failed individuals, not crashes.
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inconsistent or unsatisfiable configuration (registry filters, templates, grids).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem and network failures.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// HTTP failure carrying the status code (0 when the connection itself failed).
class FetchError : public IoError {
public:
    FetchError(int status, const std::string& msg) : IoError(msg), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

}  // namespace evopipe
