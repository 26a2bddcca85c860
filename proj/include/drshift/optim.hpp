#pragma once

#include <functional>
#include <optional>
#include <string>

#include "drshift/errors.hpp"
#include "drshift/types.hpp"

namespace drshift {

struct OptConfig {
    double tol = 1e-8;
    int max_iters = 10'000;
    double initial_step = 1.0;
    double armijo = 1e-4;
    double shrink = 0.5;
    /// Optional ball constraint ||theta|| <= radius (projected steps).
    std::optional<double> radius;
};

struct OptRecord {
    int iterations = 0;
    double grad_norm = 0.0;
    double objective = 0.0;
    bool converged = false;
};

struct OptResult {
    Vector theta;
    OptRecord record;
};

class NonConvergenceError : public NumericalError {
public:
    NonConvergenceError(const std::string& what, OptRecord record)
        : NumericalError(what), record_(record)
    {
    }
    const OptRecord& record() const { return record_; }

private:
    OptRecord record_;
};

using Objective = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;

/// Gradient descent with Armijo backtracking. Stops when ||grad|| <= tol or
/// after max_iters; throws NonConvergenceError when the final gradient norm
/// still exceeds 100 * tol.
OptResult gradient_descent(const Objective& f, const GradientFn& grad, const Vector& theta0,
                           const OptConfig& opt);

} // namespace drshift
