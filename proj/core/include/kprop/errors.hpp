#pragma once

#include <stdexcept>
#include <string>

namespace kprop {

// Invalid input shapes, ranks or parameters.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Malformed configuration files or unsupported option combinations.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, singular coefficients and similar numerical breakdowns.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class Unimplemented : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Weight or state file that cannot be read or parsed.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace kprop
