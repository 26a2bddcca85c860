#include "drshift/optim.hpp"

#include <cmath>
#include <limits>

#include "drshift/config.hpp"

namespace drshift {

namespace {

Vector project(const Vector& theta, const std::optional<double>& radius)
{
    if (!radius) {
        return theta;
    }
    const double norm = theta.norm();
    return norm > *radius ? Vector(theta * (*radius / norm)) : theta;
}

} // namespace

OptResult gradient_descent(const Objective& f, const GradientFn& grad, const Vector& theta0,
                           const OptConfig& opt)
{
    constexpr double eps = std::numeric_limits<double>::epsilon();
    Vector theta = project(theta0, opt.radius);
    double value = f(theta);
    Vector g = grad(theta);
    double step = opt.initial_step;
    OptRecord rec;

    while (true) {
        rec.grad_norm = opt.radius ? (theta - project(theta - g, opt.radius)).norm() : g.norm();
        rec.objective = value;
        if (rec.grad_norm <= opt.tol) {
            rec.converged = true;
            break;
        }
        if (rec.iterations >= opt.max_iters) {
            break;
        }
        bool accepted = false;
        Vector next;
        double next_value = 0.0;
        Vector next_g;
        // Start from twice the last accepted step so the search can grow back.
        double t = std::min(2.0 * step, 1e6 * opt.initial_step);
        while (t > 1e-30) {
            next_g.resize(0);
            next = project(theta - t * g, opt.radius);
            next_value = f(next);
            const double decrease = opt.armijo * g.dot(theta - next);
            if (next_value <= value - decrease) {
                accepted = true;
                break;
            }
            // Near the optimum the objective change drowns in round-off; fall
            // back to requiring a smaller gradient.
            if (std::abs(next_value - value) <= 16.0 * eps * (std::abs(value) + 1.0)) {
                next_g = grad(next);
                if (next_g.norm() < g.norm()) {
                    accepted = true;
                    break;
                }
            }
            t *= opt.shrink;
        }
        if (!accepted) {
            break;
        }
        step = t;
        theta = std::move(next);
        value = next_value;
        g = next_g.size() == theta.size() ? next_g : grad(theta);
        next_g.resize(0);
        ++rec.iterations;
    }

    if (!rec.converged && rec.grad_norm > 100.0 * opt.tol) {
        throw NonConvergenceError("optimizer did not converge: " + std::to_string(rec.iterations) +
                                      " iterations, final gradient norm " + format_double(rec.grad_norm),
                                  rec);
    }
    return {theta, rec};
}

} // namespace drshift
