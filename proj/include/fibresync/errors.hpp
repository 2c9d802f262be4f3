#pragma once

#include <stdexcept>
#include <string>

namespace fibresync {

/// Malformed input or configuration.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A condition of the map class could not be certified.
class CertificationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Derivative singularity, unsatisfiable threshold search and similar.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fibresync
