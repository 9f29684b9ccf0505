#pragma once

#include <stdexcept>
#include <string>

namespace cohsim {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid scenario, schema violation or dangling reference.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Power flow did not converge or a device cannot be brought to equilibrium.
class InitError : public Error {
  public:
    using Error::Error;
};

/// Singular network matrix or Newton failure during time integration.
class SolveError : public Error {
  public:
    using Error::Error;
};

}  // namespace cohsim
