#pragma once

#include <stdexcept>

namespace deepbsde {

/// A coefficient, state or loss became non-finite or left the divergence guard.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent or unsupported configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace deepbsde
