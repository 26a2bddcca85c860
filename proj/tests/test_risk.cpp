#include <doctest.h>

#include <cmath>
#include <vector>

#include "drshift/pilots.hpp"
#include "drshift/risk.hpp"
#include "drshift/scenario.hpp"
#include "test_util.hpp"

using namespace drshift;
using namespace drshift::test;

namespace {

Predictor constant(double c)
{
    return make_predictor([c](const PointRef&) { return c; }, "constant");
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) {
        m += x;
    }
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    const double n = static_cast<double>(v.size());
    return {m, std::sqrt(ss / (n - 1.0) / n)};
}

Vector random_theta(Rng& rng, int d, double scale)
{
    std::normal_distribution<double> nd;
    Vector t(d);
    for (int k = 0; k < d; ++k) {
        t[k] = nd(rng);
    }
    return scale * t / t.norm();
}

} // namespace

TEST_SUITE("risk")
{
    TEST_CASE("ERM empirical risk")
    {
        CHECK(erm_empirical_risk(hand_sample({{0, 1}}, {0}), constant(0)) == 1.0);
        const Predictor x = make_predictor([](const PointRef& p) { return p[0]; }, "x");
        CHECK(erm_empirical_risk(hand_sample({{0.5, 0.5}, {-0.2, -0.2}}, {0}), x) == 0.0);
        CHECK(erm_empirical_risk(hand_sample({{0, 1}, {0, -1}}, {0}), constant(0)) == 1.0);
    }

    TEST_CASE("IW empirical risk")
    {
        const PairedSample s = hand_sample({{0, 1}, {0.3, -0.5}, {1, 0.2}}, {0});
        const Predictor f = constant(0.1);
        CHECK(iw_empirical_risk(s, constant_ratio(1.0), f) == erm_empirical_risk(s, f));
        CHECK(iw_empirical_risk(s, constant_ratio(0.0), f) == 0.0);
        CHECK(iw_empirical_risk(hand_sample({{0, 1}}, {0}), constant_ratio(2.0), constant(0)) == 2.0);
    }

    TEST_CASE("DR empirical risk hand examples")
    {
        CHECK(dr_empirical_risk(hand_sample({{0, 1}}, {0}), constant_ratio(1.0), constant_regression(0.0), constant(0)) ==
              1.0);
        CHECK(dr_empirical_risk(hand_sample({{0, 1}}, {0}), constant_ratio(2.0), constant_regression(0.5),
                                constant(0.5)) == 0.5);
        const Predictor half = make_predictor([](const PointRef& p) { return p[0] / 2; }, "x/2");
        CHECK(dr_empirical_risk(hand_sample({{1, 0.5}, {-1, -0.5}}, {0}), constant_ratio(1.0),
                                constant_regression(0.0), half) == doctest::Approx(-0.25).epsilon(1e-15));
    }

    TEST_CASE("DR reductions")
    {
        const ShiftScenario sc(scenario_preset("well-specified"));
        const PairedSample s = sample_dataset(sc, 50, 70, 1);
        const Predictor f = make_linear_predictor(Features::affine, Vector::Constant(6, 0.05));
        const RegressionEstimate f0 = constant_regression(0.2);
        const Vector ft = f.evaluate(s.target_x);
        const double target_only = (Vector::Constant(ft.size(), 0.2) - ft).squaredNorm() / ft.size();
        CHECK(dr_empirical_risk(s, constant_ratio(0.0), f0, f) == doctest::Approx(target_only).epsilon(1e-15));

        const RegressionEstimate same(
            [f](const PointRef& x) { return f(x); }, 1.0, RegressionMethod::constant);
        const double erm = erm_empirical_risk(s, f);
        const double dr = dr_empirical_risk(s, constant_ratio(1.0), same, f);
        // The target term vanishes when f0 = f; the source correction term is zero.
        CHECK(dr == doctest::Approx(erm).epsilon(1e-15));
    }

    TEST_CASE("population risk closed forms")
    {
        const ShiftScenario sc(scenario_preset("well-specified"));
        const Predictor star = make_linear_predictor(Features::linear, sc.theta_star());
        const RiskValue r = population_q_risk(sc, star);
        CHECK(r.value == doctest::Approx(1.0 - sc.moments(Domain::target).f_square).epsilon(1e-12));
        CHECK(excess_q_risk(sc, star).value == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(r.closed_form);

        ScenarioConfig uc = scenario_preset("well-specified");
        uc.noise = Noise::uniform_additive;
        uc.noise_half_width = 0.05;
        const ShiftScenario us(uc);
        CHECK(population_q_risk(us, star).value == doctest::Approx(0.05 * 0.05 / 3).epsilon(1e-9));

        ScenarioConfig two;
        two.dim = 2;
        two.source = {Vector::Zero(2), Matrix::Identity(2, 2)};
        two.target = two.source;
        two.trunc_radius = 40.0;
        two.theta_star = Vector::Zero(2);
        const ShiftScenario iso(two);
        Vector t(2);
        t << 0.3, 0.4;
        CHECK(excess_q_risk(iso, make_linear_predictor(Features::linear, t)).value ==
              doctest::Approx(0.25).epsilon(1e-14));
    }

    TEST_CASE("Monte Carlo population risk agrees with the closed form")
    {
        const ShiftScenario sc(scenario_preset("well-specified"));
        Vector t(5);
        t << 0.1, 0.0, -0.2, 0.05, 0.0;
        const Predictor lin = make_linear_predictor(Features::linear, t);
        const Predictor opaque = make_predictor([lin](const PointRef& x) { return lin(x); }, "opaque");
        const RiskValue exact = population_q_risk(sc, lin);
        const RiskValue mc = population_q_risk(sc, opaque, McConfig{1'000'000, 3});
        CHECK_FALSE(mc.closed_form);
        CHECK(mc.mc_draws == 1'000'000);
        CHECK(std::abs(mc.value - exact.value) <= 4.0 * mc.std_error);
        const RiskValue ex = excess_q_risk(sc, opaque, McConfig{200'000, 4});
        CHECK(ex.value >= 0.0);
        CHECK(std::abs(ex.value - excess_q_risk(sc, lin).value) <= 4.0 * ex.std_error + 1e-12);
    }

    TEST_CASE("IW identity with the oracle ratio")
    {
        const ShiftScenario sc(scenario_preset("well-specified"));
        const RatioEstimate rho = oracle_ratio(sc, 1e9);
        Rng rng = make_rng(21, "theta");
        for (int k = 0; k < 5; ++k) {
            const Predictor f = make_linear_predictor(Features::linear, random_theta(rng, 5, 0.3));
            const PairedSample s = sample_dataset(sc, 100'000, 1, derive_seed(21, "iw", k));
            const Vector w = rho.evaluate(s.source_x);
            const Vector fv = f.evaluate(s.source_x);
            std::vector<double> terms(static_cast<std::size_t>(w.size()));
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                terms[static_cast<std::size_t>(i)] = w[i] * (s.source_y[i] - fv[i]) * (s.source_y[i] - fv[i]);
            }
            const MeanSe m = mean_se(terms);
            CHECK(std::abs(m.mean - population_q_risk(sc, f).value) <= 4.0 * m.se);
        }
    }

    TEST_CASE("DR risk is unbiased with the oracle ratio")
    {
        const ShiftScenario sc(scenario_preset("well-specified"));
        const RatioEstimate rho = oracle_ratio(sc, 1e9);
        const RegressionEstimate f0 = constant_regression(0.3);
        Vector t(5);
        t << 0.2, 0.2, 0.0, 0.0, 0.1;
        const std::vector<Predictor> fs{constant(0.0), make_linear_predictor(Features::linear, sc.theta_star()),
                                        make_linear_predictor(Features::linear, t)};
        for (const Predictor& f : fs) {
            std::vector<double> risks;
            for (int r = 0; r < 200; ++r) {
                risks.push_back(dr_empirical_risk(sample_dataset(sc, 200, 200, derive_seed(31, "dr", r)), rho, f0, f));
            }
            const MeanSe m = mean_se(risks);
            CHECK(std::abs(m.mean - population_q_risk(sc, f).value) <= 4.0 * m.se);
        }
    }
}
