#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "drshift/errors.hpp"
#include "drshift/harness.hpp"
#include "test_util.hpp"

using namespace drshift;
using namespace drshift::test;

namespace {

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("drshift_harness_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

Config zero_shift_oracle()
{
    return Config::parse("scenario.preset = well-specified\n"
                         "scenario.mean_q = 0, 0, 0, 0, 0\n"
                         "model.features = linear\n"
                         "pilot.ratio.method = oracle\n"
                         "pilot.reg.method = oracle\n"
                         "pilot.error_draws = 0\n"
                         "harness.cross_fit = off\n"
                         "harness.excess_draws = 1000\n");
}

} // namespace

TEST_SUITE("harness")
{
    TEST_CASE("slope estimation")
    {
        SlopeFit a = estimate_slope({{0, 0}, {1, -1}, {2, -2}});
        CHECK(a.slope == doctest::Approx(-1.0).epsilon(1e-15));
        CHECK(std::abs(a.intercept) <= 1e-15);
        SlopeFit b = estimate_slope({{0, 1}, {1, 1}});
        CHECK(b.slope == 0.0);
        CHECK(b.intercept == 1.0);
        SlopeFit c = estimate_slope({{0, 0}, {1, 1}, {2, 0}});
        CHECK(std::abs(c.slope) <= 1e-15);
        CHECK(c.intercept == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(contains(error_of<ConfigError>([] { (void)estimate_slope({{1, 2}}); }), "grid too short for slope"));
        CHECK_THROWS_AS((void)estimate_slope({{1, 2}, {1, 3}}), ConfigError);
    }

    TEST_CASE("summary statistics")
    {
        const Stats s = summarize({4, 1, 3, 2});
        CHECK(s.median == 2.5);
        CHECK(s.q1 == 1.75);
        CHECK(s.q3 == 3.25);
        CHECK(s.iqr == 1.5);
        CHECK(s.mean == 2.5);
        CHECK(s.count == 4);
    }

    TEST_CASE("seeded halving")
    {
        const ShiftScenario sc(scenario_preset("well-specified"));
        const PairedSample s = sample_dataset(sc, 101, 60, 1);
        const auto [a1, a2] = split_halves(s, 9);
        const auto [b1, b2] = split_halves(s, 9);
        CHECK(a1.source_x == b1.source_x);
        CHECK(a2.target_x == b2.target_x);
        CHECK(a1.n_source() + a2.n_source() == 101);
        CHECK(a1.n_target() == 30);
        CHECK_THROWS_AS((void)split_halves(sample_dataset(sc, 1, 5, 1), 1), ConfigError);
    }

    TEST_CASE("cross-fitting with oracle pilots uses only the second half")
    {
        const ExperimentSetup setup = make_setup(zero_shift_oracle());
        const PairedSample s = sample_dataset(setup.scenario, 400, 400, 3);
        const CrossFitResult cf = run_crossfit_dr(s, setup, 17);
        const auto halves = split_halves(s, 17);
        const Pilots oracle{oracle_ratio(setup.scenario, setup.pilots.c_dr),
                            oracle_regression(setup.scenario, setup.pilots.c_rf)};
        CHECK(cf.theta == fit_dr(halves.second, oracle, setup));
        CHECK(cf.report.n2_source == 200);
        CHECK(std::isnan(cf.report.err_rho));
    }

    TEST_CASE("zero-shift oracle rate study has slope near -1")
    {
        Config c = zero_shift_oracle();
        c.set("harness.n_grid", "250, 500, 1000, 2000");
        c.set("harness.replications", "50");
        c.set("harness.seed", "11");
        const RateStudyResult r = run_rate_study(c);
        CHECK(r.fit.slope >= -1.25);
        CHECK(r.fit.slope <= -0.75);
        int monotone = 0;
        for (std::size_t i = 1; i < r.stats.size(); ++i) {
            monotone += r.stats[i].median <= r.stats[i - 1].median;
        }
        CHECK(monotone == 3);
        for (const auto& rec : r.artifacts.records) {
            CHECK(rec.excess >= 0.0);
        }
    }

    TEST_CASE("rate study rerun writes identical files")
    {
        Config c = zero_shift_oracle();
        c.set("harness.n_grid", "100, 200");
        c.set("harness.replications", "1");
        const auto d1 = scratch("rerun1");
        const auto d2 = scratch("rerun2");
        write_artifacts(run_rate_study(c).artifacts, d1, false);
        write_artifacts(run_rate_study(c).artifacts, d2, false);
        for (const char* f : {"results.jsonl", "summary.json", "plot.csv", "config.txt"}) {
            CHECK(slurp(d1 / f) == slurp(d2 / f));
            CHECK(!slurp(d1 / f).empty());
        }
        CHECK(std::filesystem::exists(d1 / "timing.jsonl"));
        CHECK_THROWS_AS(write_artifacts(run_rate_study(c).artifacts, d1, false), ConfigError);
        CHECK_NOTHROW(write_artifacts(run_rate_study(c).artifacts, d1, true));

        const Config echo = Config::parse(slurp(d1 / "config.txt"));
        CHECK(echo.emit() == Config::parse(echo.emit()).emit());
        CHECK(echo.get_string("harness.n_grid") == "100, 200");
        std::filesystem::remove_all(d1);
        std::filesystem::remove_all(d2);
        c.set("harness.n_grid", "100");
        CHECK(contains(error_of<ConfigError>([&] { (void)run_rate_study(c); }), "grid too short for slope"));
    }

    TEST_CASE("sweep baseline cell equals the oracle-pilot fit")
    {
        const Config c = Config::parse("scenario.preset = misspecified\n"
                                       "harness.n = 300\n"
                                       "harness.replications = 4\n"
                                       "harness.eps_ratio = 0, 0.3\n"
                                       "harness.eps_reg = 0, 0.3\n"
                                       "pilot.error_draws = 5000\n"
                                       "harness.excess_draws = 2000\n"
                                       "harness.seed = 5\n");
        const DRSweepResult r = run_double_robustness_sweep(c);
        const ExperimentSetup s = make_setup(c);
        const Pilots oracle{oracle_ratio(s.scenario, s.pilots.c_dr), oracle_regression(s.scenario, s.pilots.c_rf)};
        const SweepCell& base = r.cell(0, 0);
        REQUIRE(base.dr.size() == 4);
        for (std::uint64_t rep = 0; rep < 4; ++rep) {
            const PairedSample sample = sample_dataset(s.scenario, 300, 300, derive_seed(s.seed, "sweep.sample", rep));
            CHECK(base.dr[rep] == excess_of(s, fit_dr(sample, oracle, s)));
        }
        CHECK(r.cell(1, 1).err_rho == doctest::Approx(0.3).epsilon(1e-6));
        CHECK(r.cell(1, 1).err_f == doctest::Approx(0.3).epsilon(1e-6));
        CHECK(base.dr_bias == 0.0);
    }

    TEST_CASE("estimator comparison")
    {
        Config bad = Config::parse("harness.estimators = DR-oracle, magic\nharness.n = 100\nharness.replications = 1\n");
        const auto msg = error_of<ConfigError>([&] { (void)compare_estimators(bad); });
        CHECK(contains(msg, "magic"));
        CHECK(contains(msg, "DR-crossfit"));
        bad.set("harness.estimators", "");
        CHECK_THROWS_AS((void)compare_estimators(bad), ConfigError);

        Config strong = Config::parse("scenario.preset = misspecified\n"
                                      "harness.estimators = ERM-source, IW-oracle, DR-oracle\n"
                                      "harness.n = 2000\n"
                                      "harness.replications = 20\n"
                                      "harness.excess_draws = 20000\n");
        const CompareResult r = compare_estimators(strong);
        REQUIRE(r.rows.size() == 3);
        CHECK(r.rows[1].stats.median < r.rows[0].stats.median);
        CHECK(r.rows[2].stats.median < r.rows[0].stats.median);

        Config none = zero_shift_oracle();
        none.set("pilot.ratio.method", "ulsif");
        none.set("pilot.reg.method", "ridge");
        none.set("harness.n", "1000");
        none.set("harness.replications", "20");
        const CompareResult z = compare_estimators(none);
        REQUIRE(z.rows.size() == estimator_names().size());
        for (const auto& a : z.rows) {
            for (const auto& b : z.rows) {
                CHECK(std::abs(a.stats.median - b.stats.median) <= 3.0 * std::max(a.stats.iqr, b.stats.iqr));
            }
        }
    }

    TEST_CASE("cross-fitted DR beats IW with an estimated ratio")
    {
        const CompareResult r = compare_estimators(Config::load(std::filesystem::path(DRSHIFT_CONFIG_DIR) / "compare.conf"));
        const auto row = [&](const std::string& name) -> const CompareRow& {
            return *std::find_if(r.rows.begin(), r.rows.end(), [&](const CompareRow& c) { return c.estimator == name; });
        };
        const CompareRow& dr = row("DR-crossfit");
        const CompareRow& iw = row("IW-estimated");
        REQUIRE(dr.excess.size() == 40);
        REQUIRE(iw.excess.size() == 40);
        int wins = 0;
        for (std::size_t i = 0; i < dr.excess.size(); ++i) {
            wins += dr.excess[i] < iw.excess[i];
        }
        CHECK(wins >= 24);
    }

    TEST_CASE("dominance check on a short run")
    {
        const Config c = Config::parse("harness.n = 300\nharness.replications = 10\npilot.error_draws = 2000\n");
        const DominanceResult r = run_dominance_check(c);
        CHECK(r.excess.size() == 10);
        CHECK(r.covered_fraction == 1.0);
        CHECK(linear_class_rademacher_bound(2.0, 1.5, 100) == doctest::Approx(0.4).epsilon(1e-15));
    }
}
