#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "drshift/errors.hpp"
#include "drshift/harness.hpp"
#include "drshift/paramdr.hpp"
#include "drshift/scenario.hpp"
#include "test_util.hpp"

using namespace drshift;
using namespace drshift::test;

namespace {

std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("drshift_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

} // namespace

TEST_SUITE("scenario")
{
    TEST_CASE("identical laws and zero regression")
    {
        const ShiftScenario sc(one_dim(0.0, 1.0, 1.0, 0.0, 3.0));
        for (double x : {-2.5, 0.0, 1.3}) {
            CHECK(oracle_density_ratio(sc, Vector::Constant(1, x)) == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(oracle_bayes(sc, Vector::Constant(1, x)) == 0.0);
        }
    }

    TEST_CASE("truncated Gaussian density ratio")
    {
        const ShiftScenario sc(one_dim(1.0, 1.0, 1.0, 0.0, 3.0));
        const double z_p = normal_cdf(3.0) - normal_cdf(-3.0);
        const double z_q = normal_cdf(2.0) - normal_cdf(-4.0);
        for (double x : {-2.0, 0.0, 0.5, 2.9}) {
            const double expected = std::exp(x - 0.5) * z_p / z_q;
            CHECK(oracle_density_ratio(sc, Vector::Constant(1, x)) == doctest::Approx(expected).epsilon(1e-12));
        }
        const ShiftScenario wide(one_dim(1.0, 1.0, 1.0, 0.0, 40.0));
        CHECK(oracle_density_ratio(wide, Vector::Constant(1, 0.5)) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(contains(error_of<ConfigError>([&] { (void)oracle_density_ratio(sc, Vector::Constant(1, 3.5)); }),
                       "outside"));
    }

    TEST_CASE("boundedness violation is rejected")
    {
        const auto msg = error_of<ConfigError>([] { ShiftScenario sc(one_dim(0.0, 1.0, 1.0, 0.5, 3.0)); });
        CHECK(contains(msg, "boundedness violated"));
        ScenarioConfig c = one_dim(0.0, 1.0, 1.0, 0.3, 3.0);
        c.noise = Noise::uniform_additive;
        c.noise_half_width = 0.2;
        CHECK(contains(error_of<ConfigError>([&] { ShiftScenario sc(c); }), "noise_half_width"));
        ScenarioConfig np = one_dim(0.0, 1.0, 1.0, 0.0, 3.0);
        np.source.cov(0, 0) = -1.0;
        CHECK(contains(error_of<ConfigError>([&] { ShiftScenario sc(np); }), "positive definite"));
    }

    TEST_CASE("oracle bayes")
    {
        const ShiftScenario lin(one_dim(0.0, 1.0, 1.0, 0.3, 3.0));
        CHECK(oracle_bayes(lin, Vector::Constant(1, 1.0)) == doctest::Approx(0.3).epsilon(1e-15));
        ScenarioConfig c = one_dim(0.0, 1.0, 1.0, 2.0, 3.0);
        c.link = Link::bounded_arctan;
        const ShiftScenario arc(c);
        CHECK(oracle_bayes(arc, Vector::Constant(1, 0.0)) == 0.0);
        for (double x : {-3.0, -1.0, 2.0, 3.0}) {
            CHECK(std::abs(oracle_bayes(arc, Vector::Constant(1, x))) <= 1.0);
        }
    }

    TEST_CASE("sampling is deterministic and bounded")
    {
        const ShiftScenario sc(scenario_preset("well-specified"));
        const PairedSample a = sample_dataset(sc, 300, 200, 42);
        const PairedSample b = sample_dataset(sc, 300, 200, 42);
        CHECK(a.source_x == b.source_x);
        CHECK(a.source_y == b.source_y);
        CHECK(a.target_x == b.target_x);
        CHECK(std::all_of(a.source_y.begin(), a.source_y.end(), [](double y) { return y == 1.0 || y == -1.0; }));
        for (Eigen::Index i = 0; i < a.source_x.rows(); ++i) {
            CHECK(a.source_x.row(i).norm() <= sc.trunc_radius());
        }
        const PairedSample c = sample_dataset(sc, 300, 200, 43);
        CHECK(c.source_x != a.source_x);
    }

    TEST_CASE("label-covariate moment identity")
    {
        const ShiftScenario sc(one_dim(0.0, 1.0, 1.0, 0.3, 3.0));
        const Eigen::Index n = 100'000;
        const PairedSample s = sample_dataset(sc, n, 1, 5);
        const Vector prod = s.source_y.cwiseProduct(s.source_x.col(0));
        const double mean = prod.mean();
        const double se = std::sqrt((prod.array() - mean).square().sum() / static_cast<double>(n - 1) /
                                    static_cast<double>(n));
        const double expected = 0.3 * sc.moments(Domain::source).second(0, 0);
        CHECK(std::abs(mean - expected) <= 3.0 * se);
    }

    TEST_CASE("oracle ratio reweights P to Q")
    {
        const ShiftScenario sc(scenario_preset("well-specified"));
        const Eigen::Index n = 100'000;
        Rng rp = make_rng(77, "test.p");
        Rng rq = make_rng(77, "test.q");
        const Points xp = sample_covariates(sc, Domain::source, n, rp);
        const Points xq = sample_covariates(sc, Domain::target, n, rq);
        const int d = sc.dim();
        for (int g = -1; g <= d; ++g) {
            auto value = [&](const Points& x, Eigen::Index i) {
                if (g == -1) {
                    return 1.0;
                }
                if (g == d) {
                    return x.row(i).squaredNorm();
                }
                return x(i, g);
            };
            Vector wp(n);
            Vector gq(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                wp[i] = oracle_density_ratio(sc, xp.row(i).transpose()) * value(xp, i);
                gq[i] = value(xq, i);
            }
            auto var = [](const Vector& v) { return (v.array() - v.mean()).square().sum() / (v.size() - 1.0); };
            const double se = std::sqrt(var(wp) / n + var(gq) / n);
            CHECK(std::abs(wp.mean() - gq.mean()) <= 4.0 * se);
        }
    }

    TEST_CASE("label conditional mean has unit slope")
    {
        for (Noise noise : {Noise::bernoulli_sign, Noise::uniform_additive}) {
            ScenarioConfig c = one_dim(0.0, 1.0, 1.0, 0.3, 3.0);
            c.noise = noise;
            c.noise_half_width = 0.1;
            const ShiftScenario sc(c);
            const Eigen::Index n = 100'000;
            const PairedSample s = sample_dataset(sc, n, 1, 9);
            std::vector<std::pair<double, double>> fy(static_cast<std::size_t>(n));
            for (Eigen::Index i = 0; i < n; ++i) {
                fy[static_cast<std::size_t>(i)] = {oracle_bayes(sc, s.source_x.row(i).transpose()), s.source_y[i]};
            }
            std::sort(fy.begin(), fy.end());
            const std::size_t bins = 20;
            const std::size_t per = fy.size() / bins;
            std::vector<std::pair<double, double>> means;
            for (std::size_t b = 0; b < bins; ++b) {
                double sf = 0.0;
                double sy = 0.0;
                for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
                    sf += fy[i].first;
                    sy += fy[i].second;
                }
                means.emplace_back(sf / per, sy / per);
            }
            CHECK(std::abs(estimate_slope(means).slope - 1.0) <= 0.05);
            CHECK(s.source_y.cwiseAbs().maxCoeff() <= 1.0);
        }
    }

    TEST_CASE("oracle Fisher closed forms")
    {
        const ParametricModel model(Link::identity, Features::linear, 1, 40.0);
        const FisherPair same = oracle_fisher(ShiftScenario(one_dim(0.0, 1.0, 1.0, 0.0, 40.0)), model);
        CHECK(same.i_p(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(same.i_q(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(fisher_mismatch_trace(same) == doctest::Approx(1.0).epsilon(1e-12));
        const FisherPair wide = oracle_fisher(ShiftScenario(one_dim(0.0, 1.0, 4.0, 0.0, 40.0)), model);
        CHECK(fisher_mismatch_trace(wide) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(same.provenance == FisherPair::Provenance::closed_form);
    }

    TEST_CASE("scenario config round-trips through text")
    {
        const ScenarioConfig c = scenario_preset("misspecified");
        const Config text = to_config(c);
        const ScenarioConfig back = scenario_config_from(Config::parse(text.emit()));
        CHECK(back.dim == c.dim);
        CHECK(back.theta_star == c.theta_star);
        CHECK(back.target.mean == c.target.mean);
        CHECK(back.source.cov == c.source.cov);
        CHECK(back.link == c.link);
        CHECK(to_config(back) == text);
    }

    TEST_CASE("csv ingestion")
    {
        const auto dir = scratch_dir("csv");
        write_file(dir / "s.csv", "0.5,1\n");
        write_file(dir / "t.csv", "0.5\n");
        const PairedSample s = load_csv(dir / "s.csv", dir / "t.csv", CsvSchema{1, false, false});
        CHECK(s.n_source() == 1);
        CHECK(s.source_x(0, 0) == 0.5);
        CHECK(s.source_y[0] == 1.0);
        CHECK(s.target_x(0, 0) == 0.5);
        CHECK(s.provenance.kind == Provenance::Kind::ingested);

        write_file(dir / "bad.csv", "0.5,1.5\n");
        CHECK(contains(error_of<ConfigError>([&] { (void)load_csv(dir / "bad.csv", dir / "t.csv", CsvSchema{}); }),
                       "row 1"));
        const PairedSample r = load_csv(dir / "bad.csv", dir / "t.csv", CsvSchema{1, false, true});
        CHECK(std::abs(r.source_y[0]) <= 1.0);
        write_file(dir / "empty.csv", "");
        CHECK(contains(error_of<ConfigError>([&] { (void)load_csv(dir / "s.csv", dir / "empty.csv", CsvSchema{}); }),
                       "target nonempty required"));
        write_file(dir / "mal.csv", "x,y\n0.1,0.2\n0.3,abc\n");
        CHECK(contains(error_of<ConfigError>(
                           [&] { (void)load_csv(dir / "mal.csv", dir / "t.csv", CsvSchema{1, true, false}); }),
                       "row 3"));
        std::filesystem::remove_all(dir);
    }
}
