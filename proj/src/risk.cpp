#include "drshift/risk.hpp"

#include <algorithm>
#include <cmath>

#include "drshift/kernels.hpp"

namespace drshift {

Vector Predictor::evaluate(const Points& x) const
{
    Vector out(x.rows());
    const auto n = static_cast<long long>(x.rows());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        out[i] = evaluator(x.row(i).transpose());
    }
    return out;
}

Predictor make_predictor(PointFunction fn, std::string description)
{
    return {std::move(fn), std::move(description), std::nullopt};
}

Predictor make_linear_predictor(Features features, const Vector& theta, std::string description)
{
    auto fn = [features, theta](const PointRef& x) {
        if (features == Features::linear) {
            return theta.dot(x);
        }
        return theta[0] + theta.tail(theta.size() - 1).dot(x);
    };
    return {fn, std::move(description), LinearForm{features, theta}};
}

Predictor make_model_predictor(const ParametricModel& model, const Vector& theta, std::string description)
{
    if (model.link() == Link::identity) {
        return make_linear_predictor(model.features(), theta, std::move(description));
    }
    return make_predictor([model, theta](const PointRef& x) { return model.value(x, theta); },
                          std::move(description));
}

namespace {

double mean_of(const Vector& v)
{
    return kernels::mean(kernels::view(v));
}

} // namespace

double erm_risk_values(const Vector& y, const Vector& f_src)
{
    const Vector r = (y - f_src).array().square();
    return mean_of(r);
}

double iw_risk_values(const Vector& y, const Vector& rho_src, const Vector& f_src)
{
    const Vector r = rho_src.array() * (y - f_src).array().square();
    return mean_of(r);
}

double dr_risk_values(const Vector& y, const Vector& rho_src, const Vector& f0_src, const Vector& f_src,
                      const Vector& f0_tgt, const Vector& f_tgt)
{
    const Vector src =
        rho_src.array() * ((y - f_src).array().square() - (f0_src - f_src).array().square());
    const Vector tgt = (f0_tgt - f_tgt).array().square();
    return mean_of(src) + mean_of(tgt);
}

double erm_empirical_risk(const PairedSample& sample, const Predictor& f)
{
    return erm_risk_values(sample.source_y, f.evaluate(sample.source_x));
}

double iw_empirical_risk(const PairedSample& sample, const RatioEstimate& rho, const Predictor& f)
{
    return iw_risk_values(sample.source_y, rho.evaluate(sample.source_x), f.evaluate(sample.source_x));
}

double dr_empirical_risk(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                         const Predictor& f)
{
    return dr_risk_values(sample.source_y, rho.evaluate(sample.source_x), f0.evaluate(sample.source_x),
                          f.evaluate(sample.source_x), f0.evaluate(sample.target_x), f.evaluate(sample.target_x));
}

FeatureMoments feature_moments(const ShiftScenario& sc, Features features, Domain d)
{
    const LawMoments& m = sc.moments(d);
    FeatureMoments out;
    out.f_square = m.f_square;
    if (features == Features::linear) {
        out.second = m.second;
        out.cross = m.f_cross;
        return out;
    }
    const int k = sc.dim();
    out.second.resize(k + 1, k + 1);
    out.second(0, 0) = 1.0;
    out.second.block(1, 0, k, 1) = m.mean;
    out.second.block(0, 1, 1, k) = m.mean.transpose();
    out.second.block(1, 1, k, k) = m.second;
    out.cross.resize(k + 1);
    out.cross[0] = m.f_mean;
    out.cross.tail(k) = m.f_cross;
    return out;
}

double expected_label_variance(const ShiftScenario& sc, Domain d)
{
    if (sc.noise() == Noise::bernoulli_sign) {
        return 1.0 - sc.moments(d).f_square;
    }
    const double h = sc.config().noise_half_width;
    return h * h / 3.0;
}

namespace {

RiskValue closed_form_excess(const ShiftScenario& sc, const LinearForm& lf)
{
    const FeatureMoments fm = feature_moments(sc, lf.features, Domain::target);
    const double v = lf.theta.dot(fm.second * lf.theta) - 2.0 * lf.theta.dot(fm.cross) + fm.f_square;
    return {std::max(v, 0.0), 0.0, true, 0};
}

/// Monte Carlo mean of (f - f*)^2 (plus the label variance when requested) over Q_X.
RiskValue mc_q_risk(const ShiftScenario& sc, const Predictor& f, const McConfig& mc, bool with_noise)
{
    Rng rng = make_rng(mc.seed, "risk.population");
    const Points x = sample_covariates(sc, Domain::target, mc.draws, rng);
    const Vector fx = f.evaluate(x);
    Vector terms(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double fs = oracle_bayes(sc, x.row(i).transpose());
        terms[i] = (fx[i] - fs) * (fx[i] - fs) + (with_noise ? sc.label_variance(fs) : 0.0);
    }
    const double m = mean_of(terms);
    const Vector centered = terms.array() - m;
    const double var = kernels::omp::dot(kernels::view(centered), kernels::view(centered)) /
                       static_cast<double>(std::max<Eigen::Index>(terms.size() - 1, 1));
    return {m, std::sqrt(var / static_cast<double>(terms.size())), false, mc.draws};
}

} // namespace

RiskValue population_q_risk(const ShiftScenario& sc, const Predictor& f, const McConfig& mc)
{
    if (f.linear) {
        RiskValue r = closed_form_excess(sc, *f.linear);
        r.value += expected_label_variance(sc, Domain::target);
        return r;
    }
    return mc_q_risk(sc, f, mc, true);
}

RiskValue excess_q_risk(const ShiftScenario& sc, const Predictor& f, const McConfig& mc)
{
    if (f.linear) {
        return closed_form_excess(sc, *f.linear);
    }
    RiskValue r = mc_q_risk(sc, f, mc, false);
    r.value = std::max(r.value, 0.0);
    return r;
}

} // namespace drshift
