#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "drshift/config.hpp"
#include "drshift/model.hpp"
#include "drshift/optim.hpp"
#include "drshift/paramdr.hpp"
#include "drshift/pilots.hpp"
#include "drshift/risk.hpp"
#include "drshift/scenario.hpp"

namespace drshift {

/// How the two pilots are produced from a sample.
struct PilotRecipe {
    RatioMethod ratio = RatioMethod::ulsif;
    RegressionMethod regression = RegressionMethod::ridge;
    double ratio_lambda = 0.01;
    KernelConfig kernel;
    LogisticConfig logistic;
    FeatureConfig features;
    double reg_lambda = 1e-6;
    double c_dr = kDefaultClipRatio;
    double c_rf = kDefaultClipRegression;
    double constant_ratio = 1.0;
    double constant_regression = 0.0;
};

PilotRecipe pilot_recipe_from(const Config& cfg);

struct Pilots {
    RatioEstimate rho;
    RegressionEstimate f0;
};

/// Fits (or builds, for oracle and constant methods) both pilots on `sample`.
Pilots fit_pilots(const PairedSample& sample, const ShiftScenario& sc, const PilotRecipe& recipe,
                  std::uint64_t seed);

/// Everything an experiment needs, resolved from one flat config.
struct ExperimentSetup {
    Config cfg;
    ShiftScenario scenario;
    ParametricModel model;
    PilotRecipe pilots;
    OptConfig opt;
    double ridge_eps = 0.0;
    TheoremConstants theorem;
    std::uint64_t seed = 0;
    int replications = 50;
    long long error_draws = 20'000;
    McConfig excess_mc;
};

ExperimentSetup make_setup(const Config& cfg);

/// DR minimizer: closed form for the identity link, gradient descent otherwise.
Vector fit_dr(const PairedSample& sample, const Pilots& pilots, const ExperimentSetup& setup);
/// Importance-weighted least squares with the given ratio.
Vector fit_iw(const PairedSample& sample, const RatioEstimate& rho, const ExperimentSetup& setup);
/// Unweighted least squares on the source sample.
Vector fit_erm(const PairedSample& sample, const ExperimentSetup& setup);

double excess_of(const ExperimentSetup& setup, const Vector& theta);

// Cross-fitting -------------------------------------------------------------------

/// Seeded halving of source and target into (D1, D2).
std::pair<PairedSample, PairedSample> split_halves(const PairedSample& sample, std::uint64_t seed);

struct CrossFitReport {
    Eigen::Index n1_source = 0;
    Eigen::Index n1_target = 0;
    Eigen::Index n2_source = 0;
    Eigen::Index n2_target = 0;
    double err_rho = 0.0;  // NaN when error_draws = 0
    double err_f = 0.0;
};

struct CrossFitResult {
    Vector theta;
    Predictor predictor;
    CrossFitReport report;
};

/// Pilots from D1, DR risk minimized on D2.
CrossFitResult run_crossfit_dr(const PairedSample& sample, const ExperimentSetup& setup, std::uint64_t seed);

// Results ------------------------------------------------------------------------------

struct ReplicationRecord {
    std::string study;
    long long cell = 0;
    long long rep = 0;
    long long n_source = 0;
    long long n_target = 0;
    std::string estimator;
    double excess = 0.0;
    double err_rho = 0.0;  // NaN when not measured
    double err_f = 0.0;
    std::optional<double> eps_rho;
    std::optional<double> eps_f;
    std::optional<double> bound;
    double wall_seconds = 0.0;
};

struct Stats {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double mean = 0.0;
    long long count = 0;
};

/// Order-independent summary (values are sorted first).
Stats summarize(std::vector<double> values);

struct PlotRow {
    std::string series;
    double x = 0.0;
    double y = 0.0;
};

/// Files written for every run: results.jsonl, summary.json, plot.csv,
/// config.txt and timing.jsonl (the only file that depends on wall time).
struct RunArtifacts {
    std::string study;
    std::string scenario_hash;
    std::vector<ReplicationRecord> records;
    /// Preformatted JSON lines appended to results.jsonl after the records.
    std::vector<std::string> raw_results;
    std::string summary_json;
    std::vector<PlotRow> plot;
    std::string config_echo;
};

/// Empty artifacts carrying the scenario hash and the effective config echo.
RunArtifacts make_artifacts(const std::string& study, const ExperimentSetup& setup);

void write_artifacts(const RunArtifacts& run, const std::filesystem::path& dir, bool force);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Ordinary least squares line through (x, y).
SlopeFit estimate_slope(const std::vector<std::pair<double, double>>& points);

// Studies --------------------------------------------------------------------------------

struct RateStudyResult {
    std::vector<long long> grid;
    std::vector<std::vector<double>> excess;
    std::vector<Stats> stats;
    SlopeFit fit;
    int zero_median_cells = 0;
    int failed_replications = 0;
    RunArtifacts artifacts;
};

RateStudyResult run_rate_study(const Config& cfg);

struct SweepCell {
    double target_rho = 0.0;  // requested realized error (or eps when not calibrating)
    double target_f = 0.0;
    double eps_rho = 0.0;     // applied perturbation size
    double eps_f = 0.0;
    double err_rho = 0.0;     // realized L2(P_X) error
    double err_f = 0.0;
    std::vector<double> dr;
    std::vector<double> iw;
    Stats dr_stats;
    Stats iw_stats;
    double dr_bias = 0.0;     // median minus the (0, 0) median
    double iw_bias = 0.0;
};

struct DRSweepResult {
    long long n = 0;
    std::vector<double> rho_grid;
    std::vector<double> f_grid;
    std::vector<SweepCell> cells;  // row-major over (rho, f)
    RunArtifacts artifacts;

    const SweepCell& cell(std::size_t i_rho, std::size_t i_f) const { return cells[i_rho * f_grid.size() + i_f]; }
};

DRSweepResult run_double_robustness_sweep(const Config& cfg);

inline const std::vector<std::string>& estimator_names()
{
    static const std::vector<std::string> names{"ERM-source", "IW-oracle",   "IW-estimated",
                                                "DR-oracle",  "DR-estimated", "DR-crossfit"};
    return names;
}

struct CompareRow {
    std::string estimator;
    std::vector<double> excess;
    Stats stats;
};

struct CompareResult {
    long long n = 0;
    std::vector<CompareRow> rows;
    RunArtifacts artifacts;
};

CompareResult compare_estimators(const Config& cfg);

/// Realized excess risk of the cross-fitted DR estimator against the
/// structure-agnostic bound with measured pilot errors.
struct DominanceResult {
    long long n = 0;
    std::vector<double> excess;
    std::vector<double> bound;
    double covered_fraction = 0.0;
    RunArtifacts artifacts;
};

DominanceResult run_dominance_check(const Config& cfg);

/// Plug-in Rademacher bound (theta_radius * feature_cap + 1) / sqrt(n) for the
/// shifted linear class {theta^T phi - f*: ||theta|| <= theta_radius}.
double linear_class_rademacher_bound(double theta_radius, double feature_cap, double n);

} // namespace drshift
