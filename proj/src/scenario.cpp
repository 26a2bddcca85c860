#include "drshift/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "drshift/errors.hpp"
#include "drshift/linalg.hpp"

namespace drshift {

namespace {

constexpr int kMaxRejections = 10'000;

double normal_pdf(double z)
{
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double z)
{
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

std::string join(const Vector& v)
{
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) {
            out += ",";
        }
        out += format_double(v[i]);
    }
    return out;
}

Vector to_vector(const std::vector<double>& v)
{
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix covariance_from(const std::vector<double>& entries, int dim, const std::string& key)
{
    const auto n = static_cast<int>(entries.size());
    if (n == 1) {
        return entries[0] * Matrix::Identity(dim, dim);
    }
    if (n == dim) {
        return to_vector(entries).asDiagonal();
    }
    if (n == dim * dim) {
        Matrix c(dim, dim);
        for (int r = 0; r < dim; ++r) {
            for (int k = 0; k < dim; ++k) {
                c(r, k) = entries[static_cast<std::size_t>(r * dim + k)];
            }
        }
        return c;
    }
    throw ConfigError("config key " + key + ": expected 1, dim or dim*dim entries, got " +
                      std::to_string(n));
}

Vector vector_from(const std::vector<double>& entries, int dim, const std::string& key)
{
    if (static_cast<int>(entries.size()) != dim) {
        throw ConfigError("config key " + key + ": expected " + std::to_string(dim) + " entries, got " +
                          std::to_string(entries.size()));
    }
    return to_vector(entries);
}

Noise parse_noise(const std::string& name)
{
    if (name == "bernoulli-sign") {
        return Noise::bernoulli_sign;
    }
    if (name == "uniform-additive") {
        return Noise::uniform_additive;
    }
    throw ConfigError("config key noise: unknown noise model '" + name +
                      "' (expected bernoulli-sign or uniform-additive)");
}

Eigen::LLT<Matrix> factor_covariance(const Matrix& cov, const char* key)
{
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw ConfigError(std::string("config key ") + key + ": covariance is not symmetric");
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw ConfigError(std::string("config key ") + key + ": covariance is not positive definite");
    }
    const Matrix l = llt.matrixL();
    if (l.diagonal().minCoeff() <= 0.0) {
        throw ConfigError(std::string("config key ") + key + ": covariance is not positive definite");
    }
    return llt;
}

// Upper bound on P(||X|| > R) for X ~ N(mean, cov) via the Laurent-Massart
// chi-square tail. Returns 1 when the bound is uninformative.
double tail_mass_bound(const GaussianLaw& law, double radius)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(law.cov, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff();
    const double gap = radius - law.mean.norm();
    if (gap <= 0.0) {
        return 1.0;
    }
    const double d = static_cast<double>(law.mean.size());
    const double t = gap * gap / lmax;
    if (t <= d) {
        return 1.0;
    }
    const double s = 0.5 * (-std::sqrt(d) + std::sqrt(2.0 * t - d));
    return std::exp(-s * s);
}

} // namespace

ScenarioConfig scenario_preset(const std::string& name)
{
    ScenarioConfig sc;
    if (name == "well-specified") {
        sc.dim = 5;
        sc.source = {Vector::Zero(5), 0.5 * Matrix::Identity(5, 5)};
        Vector mq = Vector::Zero(5);
        mq << 0.5, 0.5, 0.0, 0.0, 0.0;
        sc.target = {mq, 0.5 * Matrix::Identity(5, 5)};
        sc.trunc_radius = 3.0;
        sc.theta_star = Vector(5);
        sc.theta_star << 0.2, -0.15, 0.1, 0.1, -0.1;
        sc.link = Link::identity;
        sc.noise = Noise::bernoulli_sign;
        return sc;
    }
    if (name == "misspecified") {
        sc.dim = 2;
        sc.source = {Vector::Zero(2), Matrix::Identity(2, 2)};
        Vector mq(2);
        mq << 1.0, 0.0;
        sc.target = {mq, Matrix::Identity(2, 2)};
        sc.trunc_radius = 3.0;
        sc.theta_star = Vector(2);
        sc.theta_star << 2.0, 0.5;
        sc.link = Link::bounded_arctan;
        sc.noise = Noise::bernoulli_sign;
        return sc;
    }
    throw ConfigError("unknown scenario preset '" + name + "' (expected well-specified or misspecified)");
}

ScenarioConfig scenario_config_from(const Config& cfg)
{
    ScenarioConfig sc;
    const bool preset = cfg.has("preset");
    if (preset) {
        sc = scenario_preset(cfg.get_string("preset"));
    }
    if (cfg.has("dim") || !preset) {
        const auto dim = cfg.get_int("dim");
        if (dim < 1) {
            throw ConfigError("config key dim: must be a positive integer");
        }
        sc.dim = static_cast<int>(dim);
    }
    const int d = sc.dim;
    if (cfg.has("mean_p") || !preset) {
        sc.source.mean = vector_from(cfg.get_doubles("mean_p"), d, "mean_p");
    }
    if (cfg.has("mean_q") || !preset) {
        sc.target.mean = vector_from(cfg.get_doubles("mean_q"), d, "mean_q");
    }
    if (cfg.has("cov_p") || !preset) {
        sc.source.cov = covariance_from(cfg.get_doubles("cov_p"), d, "cov_p");
    }
    if (cfg.has("cov_q") || !preset) {
        sc.target.cov = covariance_from(cfg.get_doubles("cov_q"), d, "cov_q");
    }
    if (cfg.has("theta_star") || !preset) {
        sc.theta_star = vector_from(cfg.get_doubles("theta_star"), d, "theta_star");
    }
    if (cfg.has("trunc_radius") || !preset) {
        sc.trunc_radius = cfg.get_double("trunc_radius");
    }
    if (cfg.has("link")) {
        sc.link = parse_link(cfg.get_string("link"));
    }
    if (cfg.has("noise")) {
        sc.noise = parse_noise(cfg.get_string("noise"));
    }
    if (cfg.has("noise_half_width")) {
        sc.noise_half_width = cfg.get_double("noise_half_width");
    }
    return sc;
}

Config to_config(const ScenarioConfig& sc)
{
    Config cfg;
    cfg.set("dim", std::to_string(sc.dim));
    cfg.set("mean_p", join(sc.source.mean));
    cfg.set("mean_q", join(sc.target.mean));
    cfg.set("cov_p", join(Eigen::Map<const Vector>(Matrix(sc.source.cov.transpose()).data(), sc.source.cov.size())));
    cfg.set("cov_q", join(Eigen::Map<const Vector>(Matrix(sc.target.cov.transpose()).data(), sc.target.cov.size())));
    cfg.set("theta_star", join(sc.theta_star));
    cfg.set("trunc_radius", format_double(sc.trunc_radius));
    cfg.set("link", to_string(sc.link));
    cfg.set("noise", sc.noise == Noise::bernoulli_sign ? "bernoulli-sign" : "uniform-additive");
    cfg.set("noise_half_width", format_double(sc.noise_half_width));
    return cfg;
}

ShiftScenario::ShiftScenario(ScenarioConfig cfg) : cfg_(std::move(cfg))
{
    const int d = cfg_.dim;
    if (d < 1) {
        throw ConfigError("config key dim: must be a positive integer");
    }
    auto check_size = [d](const Vector& v, const char* key) {
        if (v.size() != d) {
            throw ConfigError(std::string("config key ") + key + ": dimension mismatch");
        }
    };
    check_size(cfg_.source.mean, "mean_p");
    check_size(cfg_.target.mean, "mean_q");
    check_size(cfg_.theta_star, "theta_star");
    if (cfg_.source.cov.rows() != d || cfg_.source.cov.cols() != d) {
        throw ConfigError("config key cov_p: dimension mismatch");
    }
    if (cfg_.target.cov.rows() != d || cfg_.target.cov.cols() != d) {
        throw ConfigError("config key cov_q: dimension mismatch");
    }
    if (!(cfg_.trunc_radius > 0.0) || !std::isfinite(cfg_.trunc_radius)) {
        throw ConfigError("config key trunc_radius: must be finite and > 0");
    }
    chol_p_ = factor_covariance(cfg_.source.cov, "cov_p");
    chol_q_ = factor_covariance(cfg_.target.cov, "cov_q");
    lower_p_ = chol_p_.matrixL();
    lower_q_ = chol_q_.matrixL();
    log_det_p_ = 2.0 * lower_p_.diagonal().array().log().sum();
    log_det_q_ = 2.0 * lower_q_.diagonal().array().log().sum();

    const double reach = cfg_.theta_star.norm() * cfg_.trunc_radius;
    const double f_sup = link_value(cfg_.link, reach);
    char buf[160];
    if (cfg_.link == Link::identity && reach > 1.0 + 1e-12) {
        std::snprintf(buf, sizeof buf,
                      "boundedness violated: ||theta_star|| * trunc_radius = %.6g > 1 (identity link)", reach);
        throw ConfigError(buf);
    }
    if (cfg_.noise == Noise::uniform_additive) {
        if (cfg_.noise_half_width < 0.0) {
            throw ConfigError("config key noise_half_width: must be >= 0");
        }
        if (f_sup + cfg_.noise_half_width > 1.0 + 1e-12) {
            std::snprintf(buf, sizeof buf,
                          "boundedness violated: sup|f*| + noise_half_width = %.6g > 1 (|Y| <= 1)",
                          f_sup + cfg_.noise_half_width);
            throw ConfigError(buf);
        }
    }
    moments_p_ = compute_moments(Domain::source);
    moments_q_ = compute_moments(Domain::target);
}

LawMoments ShiftScenario::compute_moments(Domain dom) const
{
    const GaussianLaw& g = law(dom);
    const int d = cfg_.dim;
    const double r = cfg_.trunc_radius;
    LawMoments m;

    if (d == 1) {
        const double mu = g.mean[0];
        const double sigma = std::sqrt(g.cov(0, 0));
        const double a = (-r - mu) / sigma;
        const double b = (r - mu) / sigma;
        const double z = normal_cdf(b) - normal_cdf(a);
        if (!(z > 0.0)) {
            throw NumericalError("truncation ball carries no mass for this law");
        }
        const double pa = normal_pdf(a);
        const double pb = normal_pdf(b);
        const double mean = mu + sigma * (pa - pb) / z;
        const double var = sigma * sigma * (1.0 + (a * pa - b * pb) / z - std::pow((pa - pb) / z, 2));
        m.normalizer = z;
        m.mean = Vector::Constant(1, mean);
        m.second = Matrix::Constant(1, 1, var + mean * mean);
    } else if (tail_mass_bound(g, r) < 1e-16) {
        m.normalizer = 1.0;
        m.mean = g.mean;
        m.second = g.cov + g.mean * g.mean.transpose();
    } else {
        // Exact untruncated moments minus a Monte Carlo estimate of the part
        // outside the ball; the MC error shrinks with the tail mass.
        Rng rng = make_rng(kInternalSeed, "scenario.normalizer", dom == Domain::source ? 0 : 1);
        std::normal_distribution<double> normal;
        const Matrix& lower = dom == Domain::source ? lower_p_ : lower_q_;
        long long outside = 0;
        Vector tail_sum = Vector::Zero(d);
        Matrix tail_outer = Matrix::Zero(d, d);
        Vector z(d);
        for (long long i = 0; i < kNormalizerDraws; ++i) {
            for (int k = 0; k < d; ++k) {
                z[k] = normal(rng);
            }
            const Vector x = g.mean + lower * z;
            if (x.squaredNorm() > r * r) {
                ++outside;
                tail_sum += x;
                tail_outer.noalias() += x * x.transpose();
            }
        }
        const double n = static_cast<double>(kNormalizerDraws);
        m.normalizer = 1.0 - static_cast<double>(outside) / n;
        if (!(m.normalizer > 0.0)) {
            throw NumericalError("truncation ball carries no mass for this law");
        }
        m.mean = (g.mean - tail_sum / n) / m.normalizer;
        m.second = (g.cov + g.mean * g.mean.transpose() - tail_outer / n) / m.normalizer;
        m.exact = false;
        m.mc_draws = kNormalizerDraws;
    }

    if (cfg_.link == Link::identity) {
        const Vector& t = cfg_.theta_star;
        m.f_cross = m.second * t;
        m.f_mean = m.mean.dot(t);
        m.f_square = t.dot(m.second * t);
    } else {
        Rng rng = make_rng(kInternalSeed, "scenario.f-moments", dom == Domain::source ? 0 : 1);
        std::normal_distribution<double> normal;
        const Matrix& lower = dom == Domain::source ? lower_p_ : lower_q_;
        Vector cross = Vector::Zero(d);
        double fm = 0.0;
        double fs = 0.0;
        Vector z(d);
        for (long long i = 0; i < kNormalizerDraws; ++i) {
            Vector x;
            int tries = 0;
            do {
                if (++tries > kMaxRejections) {
                    throw NumericalError("rejection sampler exceeded 10^4 attempts; trunc_radius too small");
                }
                for (int k = 0; k < d; ++k) {
                    z[k] = normal(rng);
                }
                x = g.mean + lower * z;
            } while (x.squaredNorm() > r * r);
            const double f = link_value(cfg_.link, cfg_.theta_star.dot(x));
            cross += f * x;
            fm += f;
            fs += f * f;
        }
        const double n = static_cast<double>(kNormalizerDraws);
        m.f_cross = cross / n;
        m.f_mean = fm / n;
        m.f_square = fs / n;
        m.exact = false;
        m.mc_draws = kNormalizerDraws;
    }
    return m;
}

Vector ShiftScenario::draw_covariate(Domain d, Rng& rng) const
{
    std::normal_distribution<double> normal;
    const GaussianLaw& g = law(d);
    const Matrix& lower = d == Domain::source ? lower_p_ : lower_q_;
    const double r2 = cfg_.trunc_radius * cfg_.trunc_radius;
    Vector z(cfg_.dim);
    for (int tries = 0; tries < kMaxRejections; ++tries) {
        for (int k = 0; k < cfg_.dim; ++k) {
            z[k] = normal(rng);
        }
        Vector x = g.mean + lower * z;
        if (x.squaredNorm() <= r2) {
            return x;
        }
    }
    throw NumericalError("rejection sampler exceeded 10^4 attempts; trunc_radius too small");
}

double ShiftScenario::label_variance(double f) const
{
    if (cfg_.noise == Noise::bernoulli_sign) {
        return 1.0 - f * f;
    }
    return cfg_.noise_half_width * cfg_.noise_half_width / 3.0;
}

double ShiftScenario::label_second_moment(double f) const
{
    return f * f + label_variance(f);
}

double ShiftScenario::draw_label(double f, Rng& rng) const
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    if (cfg_.noise == Noise::bernoulli_sign) {
        return u < 0.5 * (1.0 + f) ? 1.0 : -1.0;
    }
    return f + cfg_.noise_half_width * (2.0 * u - 1.0);
}

double ShiftScenario::log_density_unnormalized(Domain d, const PointRef& x) const
{
    const GaussianLaw& g = law(d);
    const Eigen::LLT<Matrix>& llt = d == Domain::source ? chol_p_ : chol_q_;
    const double log_det = d == Domain::source ? log_det_p_ : log_det_q_;
    const Vector w = llt.matrixL().solve(x - g.mean);
    return -0.5 * w.squaredNorm() - 0.5 * log_det -
           0.5 * static_cast<double>(cfg_.dim) * std::log(2.0 * std::numbers::pi);
}

std::string ShiftScenario::hash() const
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(to_config(cfg_).emit())));
    return buf;
}

ShiftScenario make_gaussian_shift_scenario(const ScenarioConfig& cfg)
{
    return ShiftScenario(cfg);
}

void validate(const PairedSample& s)
{
    if (s.n_source() == 0) {
        throw ConfigError("source nonempty required");
    }
    if (s.n_target() == 0) {
        throw ConfigError("target nonempty required");
    }
    if (s.source_x.cols() != s.target_x.cols()) {
        throw ConfigError("source and target covariates differ in dimension");
    }
    if (s.source_y.size() != s.n_source()) {
        throw ConfigError("source labels and covariates differ in count");
    }
    if (s.source_y.size() > 0 && s.source_y.cwiseAbs().maxCoeff() > 1.0) {
        throw ConfigError("labels must satisfy |y| <= 1");
    }
}

Points sample_covariates(const ShiftScenario& sc, Domain d, Eigen::Index n, Rng& rng)
{
    Points out(n, sc.dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        out.row(i) = sc.draw_covariate(d, rng).transpose();
    }
    return out;
}

PairedSample sample_dataset(const ShiftScenario& sc, Eigen::Index n_source, Eigen::Index n_target,
                            std::uint64_t seed)
{
    if (n_source < 1 || n_target < 1) {
        throw ConfigError("sample sizes must be >= 1");
    }
    PairedSample s;
    Rng src = make_rng(seed, "sample.source");
    Rng lab = make_rng(seed, "sample.labels");
    Rng tgt = make_rng(seed, "sample.target");
    s.source_x = sample_covariates(sc, Domain::source, n_source, src);
    s.source_y.resize(n_source);
    for (Eigen::Index i = 0; i < n_source; ++i) {
        s.source_y[i] = sc.draw_label(oracle_bayes(sc, s.source_x.row(i).transpose()), lab);
    }
    s.target_x = sample_covariates(sc, Domain::target, n_target, tgt);
    s.provenance = {Provenance::Kind::synthetic, seed, {}};
    return s;
}

double oracle_density_ratio(const ShiftScenario& sc, const PointRef& x)
{
    if (x.size() != sc.dim()) {
        throw ConfigError("covariate dimension mismatch");
    }
    const double r = sc.trunc_radius();
    if (x.squaredNorm() > r * r) {
        throw ConfigError("density ratio undefined outside the truncation ball");
    }
    const double log_ratio = sc.log_density_unnormalized(Domain::target, x) -
                             sc.log_density_unnormalized(Domain::source, x);
    return std::exp(log_ratio) * sc.moments(Domain::source).normalizer /
           sc.moments(Domain::target).normalizer;
}

double oracle_bayes(const ShiftScenario& sc, const PointRef& x)
{
    return link_value(sc.link(), sc.theta_star().dot(x));
}

FisherPair oracle_fisher(const ShiftScenario& sc, const ParametricModel& model, long long mc_draws,
                         std::uint64_t mc_seed)
{
    if (model.link() != sc.link()) {
        throw ConfigError("model link " + to_string(model.link()) + " incompatible with scenario link " +
                          to_string(sc.link()));
    }
    if (model.input_dim() != sc.dim()) {
        throw ConfigError("model input dimension does not match scenario dimension");
    }
    FisherPair fp;
    if (model.link() == Link::identity) {
        auto feature_second = [&](const LawMoments& m) {
            if (model.features() == Features::linear) {
                return Matrix(m.second);
            }
            const int d = sc.dim();
            Matrix s(d + 1, d + 1);
            s(0, 0) = 1.0;
            s.block(1, 0, d, 1) = m.mean;
            s.block(0, 1, 1, d) = m.mean.transpose();
            s.block(1, 1, d, d) = m.second;
            return s;
        };
        fp.i_p = 2.0 * feature_second(sc.moments(Domain::source));
        fp.i_q = 2.0 * feature_second(sc.moments(Domain::target));
        const bool exact = sc.moments(Domain::source).exact && sc.moments(Domain::target).exact;
        fp.provenance = exact ? FisherPair::Provenance::closed_form : FisherPair::Provenance::monte_carlo;
        fp.mc_draws = exact ? 0 : ShiftScenario::kNormalizerDraws;
        fp.mc_seed = exact ? 0 : ShiftScenario::kInternalSeed;
    } else {
        const Vector theta = model.embed(sc.theta_star());
        const int p = model.dim_theta();
        for (Domain dom : {Domain::source, Domain::target}) {
            Rng rng = make_rng(mc_seed, "oracle.fisher", dom == Domain::source ? 0 : 1);
            Matrix acc = Matrix::Zero(p, p);
            for (long long i = 0; i < mc_draws; ++i) {
                const Vector g = model.gradient(sc.draw_covariate(dom, rng), theta);
                acc.noalias() += g * g.transpose();
            }
            (dom == Domain::source ? fp.i_p : fp.i_q) = 2.0 * acc / static_cast<double>(mc_draws);
        }
        fp.provenance = FisherPair::Provenance::monte_carlo;
        fp.mc_draws = mc_draws;
        fp.mc_seed = mc_seed;
    }
    require_positive_definite(fp.i_q, "target Fisher singular");
    return fp;
}

} // namespace drshift
