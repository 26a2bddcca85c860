#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "drshift/model.hpp"
#include "drshift/pilots.hpp"
#include "drshift/scenario.hpp"
#include "drshift/types.hpp"

namespace drshift {

/// theta^T phi(x) with phi the linear or affine feature map.
struct LinearForm {
    Features features = Features::linear;
    Vector theta;
};

/// Candidate regression function. When `linear` is set the evaluator is the
/// linear form itself and population quantities use closed forms.
struct Predictor {
    PointFunction evaluator;
    std::string description;
    std::optional<LinearForm> linear;

    double operator()(const PointRef& x) const { return evaluator(x); }
    Vector evaluate(const Points& x) const;
};

Predictor make_predictor(PointFunction fn, std::string description);
Predictor make_linear_predictor(Features features, const Vector& theta, std::string description = "linear");
/// f(.; theta) of a parametric model; linear form attached for the identity link.
Predictor make_model_predictor(const ParametricModel& model, const Vector& theta,
                               std::string description = "model");

double erm_empirical_risk(const PairedSample& sample, const Predictor& f);
double iw_empirical_risk(const PairedSample& sample, const RatioEstimate& rho, const Predictor& f);
/// (1/n_P) sum rho [(y - f)^2 - (f0 - f)^2] + (1/n_Q) sum (f0 - f)^2. May be negative.
double dr_empirical_risk(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                         const Predictor& f);

/// Same three risks from values already evaluated at the sample points.
double erm_risk_values(const Vector& y, const Vector& f_src);
double iw_risk_values(const Vector& y, const Vector& rho_src, const Vector& f_src);
double dr_risk_values(const Vector& y, const Vector& rho_src, const Vector& f0_src, const Vector& f_src,
                      const Vector& f0_tgt, const Vector& f_tgt);

struct McConfig {
    long long draws = 1'000'000;
    std::uint64_t seed = 0;
};

struct RiskValue {
    double value = 0.0;
    double std_error = 0.0;  // 0 for closed forms
    bool closed_form = true;
    long long mc_draws = 0;
};

/// E[phi phi^T] and E[f* phi] under one covariate law.
struct FeatureMoments {
    Matrix second;
    Vector cross;
    double f_square = 0.0;
};
FeatureMoments feature_moments(const ShiftScenario& sc, Features features, Domain d);

/// E_Q[Var(Y | X)].
double expected_label_variance(const ShiftScenario& sc, Domain d);

/// R_Q(f) = E_Q[(Y - f(X))^2].
RiskValue population_q_risk(const ShiftScenario& sc, const Predictor& f, const McConfig& mc = {});
/// E_Q[(f(X) - f*(X))^2], clamped at 0.
RiskValue excess_q_risk(const ShiftScenario& sc, const Predictor& f, const McConfig& mc = {});

} // namespace drshift
