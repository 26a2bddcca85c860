#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "drshift/model.hpp"
#include "drshift/pilots.hpp"
#include "drshift/scenario.hpp"
#include "drshift/types.hpp"

namespace drshift {

/// A function class whose Rademacher complexity we estimate. Members are
/// evaluated as g(x) - offset(x), so passing f* as the offset gives F - f*.
struct FunctionClassSpec {
    enum class Kind { finite, linear_ball, nn_frobenius };
    Kind kind = Kind::finite;
    double bound_b = 1.0;

    // finite
    std::vector<PointFunction> members;

    // linear_ball: theta^T phi(x) with ||theta|| <= radius
    Features features = Features::linear;
    double radius = 1.0;

    // nn_frobenius: eta(W_depth relu(... relu(W_1 x))) with ||W_j||_F <= caps[j]
    int depth = 1;
    std::vector<int> widths;  // hidden widths, depth - 1 entries
    std::vector<double> caps;
    double lipschitz = 2.0 / 3.141592653589793;
    double input_radius = 1.0;

    PointFunction offset;  // empty means zero
};

void validate(const FunctionClassSpec& spec);

/// eta(t) = (2/pi) atan(pi L t / 2): bounded by 1, L-Lipschitz, eta(0) = 0.
double nn_output_link(double lipschitz, double t);

struct RadEstimate {
    enum class Mode { exact_enumeration, monte_carlo, lower_bound };
    double value = 0.0;
    long long n_points = 0;
    long long n_sign_draws = 0;
    Mode mode = Mode::exact_enumeration;
    double std_error = 0.0;
};

std::string to_string(RadEstimate::Mode mode);

struct SignConfig {
    int exact_threshold = 12;
    long long n_signs = 2000;
    int nn_starts = 16;
    int nn_steps = 60;
};

/// Mean over sign vectors of sup_g |(1/n) sum sigma_i g(x_i)|.
RadEstimate empirical_rademacher(const FunctionClassSpec& spec, const Points& x, const SignConfig& signs,
                                 std::uint64_t seed);

/// Outer Monte Carlo over n_outer fresh draws of n points from one covariate law.
RadEstimate rademacher_under_law(const FunctionClassSpec& spec, const ShiftScenario& sc, Domain law, long long n,
                                 long long n_outer, const SignConfig& signs, std::uint64_t seed);

/// Named additive terms of a bound, in display order.
struct BoundTerms {
    std::vector<std::pair<std::string, double>> terms;
    double total() const;
};

BoundTerms finite_class_bound_terms(double b, long long class_size, double n);
double finite_class_bound(double b, long long class_size, double n);

BoundTerms nn_class_bound_terms(double lipschitz, double radius, int depth, const std::vector<double>& caps,
                                double n);
double nn_class_bound(double lipschitz, double radius, int depth, const std::vector<double>& caps, double n);

struct AgnosticInputs {
    double err_rho = 0.0;
    double err_f = 0.0;
    double c_dr = kDefaultClipRatio;
    double c_rf = kDefaultClipRegression;
    double rad_p = 0.0;
    double rad_q = 0.0;
    double n_p = 1.0;
    double n_q = 1.0;
    double delta = 0.05;
};

BoundTerms structure_agnostic_bound_terms(const AgnosticInputs& in);
double structure_agnostic_bound(const AgnosticInputs& in);

} // namespace drshift
