#pragma once

#include "drshift/model.hpp"
#include "drshift/optim.hpp"
#include "drshift/pilots.hpp"
#include "drshift/scenario.hpp"
#include "drshift/types.hpp"

namespace drshift {

/// DR empirical risk of a parametric model with the pilots already evaluated
/// at the sample points.
struct DrProblem {
    ParametricModel model;
    Points phi_source;
    Points phi_target;
    Vector y;
    Vector rho_source;
    Vector f0_source;
    Vector f0_target;
};

DrProblem make_dr_problem(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                          const ParametricModel& model);

double dr_risk(const DrProblem& p, const Vector& theta);
Vector dr_gradient(const DrProblem& p, const Vector& theta);
Matrix dr_hessian(const DrProblem& p, const Vector& theta);
/// G_Q = (1/n_Q) sum phi phi^T over the target points.
Matrix target_gram(const DrProblem& p);

Vector dr_gradient(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                   const ParametricModel& model, const Vector& theta);
Matrix dr_hessian(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                  const ParametricModel& model, const Vector& theta);

/// Exact minimizer of the DR risk for the identity link (ridge_eps = 0), or of
/// its ridge-regularized version.
Vector solve_linear_dr(const DrProblem& p, double ridge_eps = 0.0);
Vector solve_linear_dr(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                       const ParametricModel& model, double ridge_eps = 0.0);

OptResult minimize_dr(const DrProblem& p, const Vector& theta0, const OptConfig& opt = {});
OptResult minimize_dr(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                      const ParametricModel& model, const Vector& theta0, const OptConfig& opt = {});

/// argmin (1/n) sum w_i (y_i - f(x_i; theta))^2; closed form for the identity
/// link, gradient descent from zero otherwise. Uniform w gives plain ERM.
Vector fit_weighted_least_squares(const ParametricModel& model, const Points& x, const Vector& y,
                                  const Vector& w, double ridge_eps = 0.0, const OptConfig& opt = {});

/// 2 (1/n) sum grad f grad f^T.
Matrix empirical_fisher(const Points& x, const ParametricModel& model, const Vector& theta);

/// Trace(I_P I_Q^{-1}) through a linear solve.
double fisher_mismatch_trace(const FisherPair& fp);

struct BConstants {
    double b1 = 0.0;
    double b2 = 0.0;
    double b3 = 0.0;
};
BConstants b_constants(double b1, double b2, double b3, double c_dr, double c_rf);

struct Thresholds {
    double n1 = 0.0;
    double n2 = 0.0;
    double n_star = 0.0;
    double kappa_bar = 0.0;
    double kappa = 0.0;
};

struct TheoremConstants {
    double k_abs = 1.0;
    double c_dr = kDefaultClipRatio;
    double c_rf = kDefaultClipRegression;
    double delta = 0.05;
    Smoothness smooth;
};

/// 18 K^2 (1+C_dr)^2 (1+C_rf)^2 log(d/delta) [Tr(I_P I_Q^{-1})/n_P + d/n_Q].
double parametric_bound(const FisherPair& fp, const TheoremConstants& tc, int d, double n_p, double n_q);
Thresholds sample_size_thresholds(const FisherPair& fp, const TheoremConstants& tc, int d);
/// 3K(1+C_dr)(1+C_rf) sqrt(log(d/delta)) [sqrt(Tr(I_P I_Q^-2)/n_P) + sqrt(Tr(I_Q^-1)/n_Q)].
double confidence_radius(const FisherPair& fp, const TheoremConstants& tc, double n_p, double n_q);

} // namespace drshift
