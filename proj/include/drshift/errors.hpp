#pragma once

#include <stdexcept>
#include <string>

namespace drshift {

/// Bad user input: malformed config, violated precondition, unknown name.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Runtime numerical failure: singular systems, non-convergence, sampler exhaustion.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace drshift
