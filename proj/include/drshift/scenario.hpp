#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Cholesky>

#include "drshift/config.hpp"
#include "drshift/model.hpp"
#include "drshift/rng.hpp"
#include "drshift/types.hpp"

namespace drshift {

enum class Domain { source, target };
enum class Noise { bernoulli_sign, uniform_additive };

struct GaussianLaw {
    Vector mean;
    Matrix cov;
};

/// Everything needed to build a ShiftScenario. Mirrors the scenario config keys
/// (dim, mean_p, mean_q, cov_p, cov_q, theta_star, link, noise, noise_half_width,
/// trunc_radius).
struct ScenarioConfig {
    int dim = 1;
    GaussianLaw source;
    GaussianLaw target;
    double trunc_radius = 1.0;
    Vector theta_star;
    Link link = Link::identity;
    Noise noise = Noise::bernoulli_sign;
    double noise_half_width = 0.0;
};

ScenarioConfig scenario_config_from(const Config& cfg);
/// Inverse of scenario_config_from; emitted keys parse back to the same config.
Config to_config(const ScenarioConfig& sc);
/// Named presets: "well-specified" and "misspecified".
ScenarioConfig scenario_preset(const std::string& name);

/// Moments of one truncated covariate law, including the cross moments with f*.
struct LawMoments {
    double normalizer = 1.0;   // mass of the untruncated Gaussian inside the ball
    Vector mean;               // E[X]
    Matrix second;             // E[X X^T]
    Vector f_cross;            // E[f*(X) X]
    double f_mean = 0.0;       // E[f*(X)]
    double f_square = 0.0;     // E[f*(X)^2]
    bool exact = true;         // false when any entry came from Monte Carlo
    long long mc_draws = 0;
};

/// Two Gaussian covariate laws truncated to the same centered ball, a shared
/// Bayes function f*(x) = eta(theta*^T x) and a bounded label noise model.
/// Immutable after construction.
class ShiftScenario {
public:
    explicit ShiftScenario(ScenarioConfig cfg);

    const ScenarioConfig& config() const { return cfg_; }
    int dim() const { return cfg_.dim; }
    double trunc_radius() const { return cfg_.trunc_radius; }
    Link link() const { return cfg_.link; }
    Noise noise() const { return cfg_.noise; }
    const Vector& theta_star() const { return cfg_.theta_star; }
    const GaussianLaw& law(Domain d) const { return d == Domain::source ? cfg_.source : cfg_.target; }
    const LawMoments& moments(Domain d) const { return d == Domain::source ? moments_p_ : moments_q_; }

    /// Draw one covariate from the truncated law by rejection (cap 10^4 attempts).
    Vector draw_covariate(Domain d, Rng& rng) const;
    /// E[Y^2 | X = x].
    double label_second_moment(double f) const;
    /// Label variance Var(Y | X = x) given f*(x).
    double label_variance(double f) const;
    double draw_label(double f, Rng& rng) const;

    double log_density_unnormalized(Domain d, const PointRef& x) const;
    /// Stable hash of the canonical config text, hex encoded.
    std::string hash() const;

    static constexpr long long kNormalizerDraws = 1'000'000;
    static constexpr std::uint64_t kInternalSeed = 0x5eed0f5ca1eULL;

private:
    LawMoments compute_moments(Domain d) const;

    ScenarioConfig cfg_;
    Eigen::LLT<Matrix> chol_p_;
    Eigen::LLT<Matrix> chol_q_;
    Matrix lower_p_;
    Matrix lower_q_;
    double log_det_p_ = 0.0;
    double log_det_q_ = 0.0;
    LawMoments moments_p_;
    LawMoments moments_q_;
};

ShiftScenario make_gaussian_shift_scenario(const ScenarioConfig& cfg);

struct Provenance {
    enum class Kind { synthetic, ingested };
    Kind kind = Kind::synthetic;
    std::uint64_t seed = 0;
    std::string path;
};

/// n_P labeled source observations and n_Q unlabeled target covariates.
struct PairedSample {
    Points source_x;
    Vector source_y;
    Points target_x;
    Provenance provenance;

    Eigen::Index n_source() const { return source_x.rows(); }
    Eigen::Index n_target() const { return target_x.rows(); }
    Eigen::Index dim() const { return source_x.cols(); }
};

/// Checks the PairedSample invariants (nonempty, shared dimension, |y| <= 1).
void validate(const PairedSample& sample);

PairedSample sample_dataset(const ShiftScenario& sc, Eigen::Index n_source, Eigen::Index n_target,
                            std::uint64_t seed);
Points sample_covariates(const ShiftScenario& sc, Domain d, Eigen::Index n, Rng& rng);

/// q_X(x) / p_X(x) for x inside the truncation ball.
double oracle_density_ratio(const ShiftScenario& sc, const PointRef& x);
/// f*(x) = eta(theta*^T x).
double oracle_bayes(const ShiftScenario& sc, const PointRef& x);

/// I_mu(theta*) = 2 E_mu[grad f grad f^T] for mu in {P, Q}. Closed form from the
/// cached law moments when the link is the identity, Monte Carlo otherwise.
FisherPair oracle_fisher(const ShiftScenario& sc, const ParametricModel& model,
                         long long mc_draws = 200'000, std::uint64_t mc_seed = 7);

struct CsvSchema {
    int dim = 1;
    bool header = false;
    bool rescale_labels = false;
};

PairedSample load_csv(const std::filesystem::path& source_path,
                      const std::filesystem::path& target_path, const CsvSchema& schema);
void write_csv(const PairedSample& sample, const std::filesystem::path& source_path,
               const std::filesystem::path& target_path);

} // namespace drshift
