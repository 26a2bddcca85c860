#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "drshift/scenario.hpp"
#include "drshift/types.hpp"

namespace drshift {

using PointFunction = std::function<double(const PointRef&)>;

enum class RatioMethod { ulsif, logistic, oracle, constant, corrupted };
enum class RegressionMethod { ridge, oracle, constant, corrupted };

std::string to_string(RatioMethod m);
std::string to_string(RegressionMethod m);

/// Black-box density ratio pilot. Outputs are clipped to [0, c_dr] on every
/// evaluation, whatever the underlying fit produced.
class RatioEstimate {
public:
    RatioEstimate(PointFunction raw, double c_dr, RatioMethod method);

    double operator()(const PointRef& x) const;
    Vector evaluate(const Points& x) const;
    double c_dr() const { return c_dr_; }
    RatioMethod method() const { return method_; }

private:
    PointFunction raw_;
    double c_dr_;
    RatioMethod method_;
};

/// Black-box regression pilot, clipped to [-c_rf, c_rf].
class RegressionEstimate {
public:
    RegressionEstimate(PointFunction raw, double c_rf, RegressionMethod method);

    double operator()(const PointRef& x) const;
    Vector evaluate(const Points& x) const;
    double c_rf() const { return c_rf_; }
    RegressionMethod method() const { return method_; }

private:
    PointFunction raw_;
    double c_rf_;
    RegressionMethod method_;
};

inline constexpr double kDefaultClipRatio = 30.0;
inline constexpr double kDefaultClipRegression = 1.0;

RatioEstimate oracle_ratio(const ShiftScenario& sc, double c_dr = kDefaultClipRatio);
RegressionEstimate oracle_regression(const ShiftScenario& sc, double c_rf = kDefaultClipRegression);
RatioEstimate constant_ratio(double value, double c_dr = kDefaultClipRatio);
RegressionEstimate constant_regression(double value, double c_rf = kDefaultClipRegression);

// uLSIF --------------------------------------------------------------------

struct KernelConfig {
    enum class Basis { gaussian, constant };
    Basis basis = Basis::gaussian;
    int max_centers = 100;
    /// Median heuristic over pooled covariates when unset.
    std::optional<double> bandwidth;
    /// Pairwise distances for the median heuristic use at most this many points.
    int median_points = 1000;
    std::uint64_t seed = 0;
};

struct UlsifFit {
    RatioEstimate estimate;
    Matrix h_matrix;  // mean over source of k(x) k(x)^T
    Vector h_vector;  // mean over target of k(x)
    Vector alpha;
    double lambda = 0.0;
    double bandwidth = 0.0;
    Points centers;
};

UlsifFit fit_ulsif_detailed(const PairedSample& sample, const KernelConfig& kernel, double lambda,
                            double c_dr = kDefaultClipRatio);
RatioEstimate fit_ulsif(const PairedSample& sample, const KernelConfig& kernel, double lambda,
                        double c_dr = kDefaultClipRatio);

// Logistic discriminator ------------------------------------------------------

struct LogisticConfig {
    double l2_penalty = 1e-4;
    int max_iters = 200;
    double grad_tol = 1e-8;
    bool intercept_only = false;
};

struct LogisticFit {
    RatioEstimate estimate;
    Vector coef;  // intercept first
    int iterations = 0;
    double grad_norm = 0.0;
};

LogisticFit fit_logistic_ratio_detailed(const PairedSample& sample, const LogisticConfig& opt,
                                        double c_dr = kDefaultClipRatio);
RatioEstimate fit_logistic_ratio(const PairedSample& sample, const LogisticConfig& opt,
                                 double c_dr = kDefaultClipRatio);

// Ridge regression pilot --------------------------------------------------------

struct FeatureConfig {
    enum class Kind { linear, affine, rbf };
    Kind kind = Kind::affine;
    int max_centers = 100;
    std::optional<double> bandwidth;
    std::uint64_t seed = 0;
};

FeatureConfig::Kind parse_feature_kind(const std::string& name);

RegressionEstimate fit_pilot_regression(const PairedSample& sample, const FeatureConfig& features,
                                        double ridge_lambda, double c_rf = kDefaultClipRegression);

// Corruption --------------------------------------------------------------------

/// Perturbation direction g(x) = offset + coef^T x, rescaled to unit L2(P_X) norm.
struct Direction {
    double offset = 1.0;
    Vector coef;  // empty means zero
    long long norm_mc_draws = 100'000;
    std::uint64_t norm_seed = 11;
};

/// "constant", "x<k>" or "1+x<k>" (k is 1-based).
Direction parse_direction(const std::string& spec, int dim);

/// L2(P_X) norm of the unnormalized direction, by seeded Monte Carlo.
double direction_norm(const Direction& dir, const ShiftScenario& sc);

RatioEstimate corrupt_pilot(const RatioEstimate& base, double eps, const Direction& dir,
                            const ShiftScenario& sc);
RegressionEstimate corrupt_pilot(const RegressionEstimate& base, double eps, const Direction& dir,
                                 const ShiftScenario& sc);

/// Smallest eps whose corrupted pilot has realized L2(P_X) error `target`
/// (bisection on the same draws pilot_l2_error uses). Throws ConfigError when
/// clipping makes the target unreachable.
double calibrate_corruption(const RatioEstimate& base, double target, const Direction& dir,
                            const ShiftScenario& sc, long long mc_n, std::uint64_t seed);
double calibrate_corruption(const RegressionEstimate& base, double target, const Direction& dir,
                            const ShiftScenario& sc, long long mc_n, std::uint64_t seed);

/// sqrt(mean (est(X) - oracle(X))^2) over mc_n draws X ~ P_X.
double pilot_l2_error(const RatioEstimate& est, const ShiftScenario& sc, long long mc_n,
                      std::uint64_t seed);
double pilot_l2_error(const RegressionEstimate& est, const ShiftScenario& sc, long long mc_n,
                      std::uint64_t seed);

/// Median of pairwise Euclidean distances (median heuristic bandwidth).
double median_pairwise_distance(const Points& x);

} // namespace drshift
