#pragma once

#include <stdexcept>
#include <string>

namespace vocaldiff {

// Shapes that do not line up for an operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid hyper-parameters or model configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Caller broke a documented precondition (non-scalar loss, missing gradient, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Malformed binary file (bad magic, version, truncation).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace vocaldiff
