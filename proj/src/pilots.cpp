#include "drshift/pilots.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "drshift/config.hpp"
#include "drshift/errors.hpp"
#include "drshift/kernels.hpp"
#include "drshift/linalg.hpp"
#include "drshift/rng.hpp"

namespace drshift {

namespace {

template <class Fn>
Vector evaluate_rows(const Points& x, const Fn& fn)
{
    Vector out(x.rows());
    const auto n = static_cast<long long>(x.rows());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        out[i] = fn(x.row(i).transpose());
    }
    return out;
}

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, std::uint64_t seed, std::string_view purpose)
{
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Rng rng = make_rng(seed, purpose);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

Points take_rows(const Points& x, const std::vector<Eigen::Index>& idx, std::size_t count)
{
    count = std::min(count, idx.size());
    Points out(static_cast<Eigen::Index>(count), x.cols());
    for (std::size_t i = 0; i < count; ++i) {
        out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    }
    return out;
}

/// Gaussian RBF basis k_l(x) = exp(-||x - c_l||^2 / (2 s^2)).
struct RbfBasis {
    Points centers;
    double bandwidth = 1.0;

    Vector operator()(const PointRef& x) const
    {
        Vector k(centers.rows());
        const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
        for (Eigen::Index l = 0; l < centers.rows(); ++l) {
            k[l] = std::exp(-(centers.row(l).transpose() - x).squaredNorm() * inv);
        }
        return k;
    }

    Points design(const Points& x) const
    {
        Points out(x.rows(), centers.rows());
        const auto n = static_cast<long long>(x.rows());
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < n; ++i) {
            out.row(i) = (*this)(x.row(i).transpose()).transpose();
        }
        return out;
    }
};

Points pooled(const PairedSample& s)
{
    Points all(s.n_source() + s.n_target(), s.dim());
    all.topRows(s.n_source()) = s.source_x;
    all.bottomRows(s.n_target()) = s.target_x;
    return all;
}

} // namespace

std::string to_string(RatioMethod m)
{
    switch (m) {
    case RatioMethod::ulsif: return "ulsif";
    case RatioMethod::logistic: return "logistic";
    case RatioMethod::oracle: return "oracle";
    case RatioMethod::constant: return "constant";
    case RatioMethod::corrupted: return "corrupted";
    }
    return "unknown";
}

std::string to_string(RegressionMethod m)
{
    switch (m) {
    case RegressionMethod::ridge: return "ridge";
    case RegressionMethod::oracle: return "oracle";
    case RegressionMethod::constant: return "constant";
    case RegressionMethod::corrupted: return "corrupted";
    }
    return "unknown";
}

RatioEstimate::RatioEstimate(PointFunction raw, double c_dr, RatioMethod method)
    : raw_(std::move(raw)), c_dr_(c_dr), method_(method)
{
    if (!(c_dr > 0.0)) {
        throw ConfigError("config key pilot.clip.c_dr: must be > 0");
    }
}

double RatioEstimate::operator()(const PointRef& x) const
{
    const double v = raw_(x);
    if (std::isnan(v)) {
        return 0.0;
    }
    return std::clamp(v, 0.0, c_dr_);
}

Vector RatioEstimate::evaluate(const Points& x) const
{
    return evaluate_rows(x, *this);
}

RegressionEstimate::RegressionEstimate(PointFunction raw, double c_rf, RegressionMethod method)
    : raw_(std::move(raw)), c_rf_(c_rf), method_(method)
{
    if (!(c_rf > 0.0)) {
        throw ConfigError("config key pilot.clip.c_rf: must be > 0");
    }
}

double RegressionEstimate::operator()(const PointRef& x) const
{
    const double v = raw_(x);
    if (std::isnan(v)) {
        return 0.0;
    }
    return std::clamp(v, -c_rf_, c_rf_);
}

Vector RegressionEstimate::evaluate(const Points& x) const
{
    return evaluate_rows(x, *this);
}

RatioEstimate oracle_ratio(const ShiftScenario& sc, double c_dr)
{
    auto shared = std::make_shared<const ShiftScenario>(sc);
    return RatioEstimate([shared](const PointRef& x) { return oracle_density_ratio(*shared, x); }, c_dr,
                         RatioMethod::oracle);
}

RegressionEstimate oracle_regression(const ShiftScenario& sc, double c_rf)
{
    auto shared = std::make_shared<const ShiftScenario>(sc);
    return RegressionEstimate([shared](const PointRef& x) { return oracle_bayes(*shared, x); }, c_rf,
                              RegressionMethod::oracle);
}

RatioEstimate constant_ratio(double value, double c_dr)
{
    return RatioEstimate([value](const PointRef&) { return value; }, c_dr, RatioMethod::constant);
}

RegressionEstimate constant_regression(double value, double c_rf)
{
    return RegressionEstimate([value](const PointRef&) { return value; }, c_rf, RegressionMethod::constant);
}

double median_pairwise_distance(const Points& x)
{
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(x.rows() * (x.rows() - 1) / 2));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
            d.push_back((x.row(i) - x.row(j)).norm());
        }
    }
    if (d.empty()) {
        return 1.0;
    }
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0.0 ? *mid : 1.0;
}

UlsifFit fit_ulsif_detailed(const PairedSample& sample, const KernelConfig& kernel, double lambda,
                            double c_dr)
{
    validate(sample);
    if (!(lambda >= 0.0)) {
        throw ConfigError("config key pilot.ratio.lambda: must be >= 0");
    }
    if (kernel.basis == KernelConfig::Basis::constant) {
        Matrix h = Matrix::Ones(1, 1);
        Vector hv = Vector::Ones(1);
        const Vector alpha = solve_symmetric(h + lambda * Matrix::Identity(1, 1), hv,
                                             "uLSIF system singular; use lambda > 0");
        const double a = alpha[0];
        return {RatioEstimate([a](const PointRef&) { return a; }, c_dr, RatioMethod::ulsif),
                h, hv, alpha, lambda, 0.0, Points(0, sample.dim())};
    }
    if (kernel.max_centers < 1) {
        throw ConfigError("config key pilot.ratio.centers: must be >= 1");
    }

    auto basis = std::make_shared<RbfBasis>();
    const auto center_order = shuffled_indices(sample.n_target(), kernel.seed, "ulsif.centers");
    basis->centers = take_rows(sample.target_x, center_order, static_cast<std::size_t>(kernel.max_centers));
    if (kernel.bandwidth) {
        basis->bandwidth = *kernel.bandwidth;
    } else {
        const Points all = pooled(sample);
        const auto order = shuffled_indices(all.rows(), kernel.seed, "ulsif.median");
        basis->bandwidth =
            median_pairwise_distance(take_rows(all, order, static_cast<std::size_t>(kernel.median_points)));
    }

    const Points k_src = basis->design(sample.source_x);
    const Points k_tgt = basis->design(sample.target_x);
    const Vector w_src = Vector::Constant(k_src.rows(), 1.0 / static_cast<double>(k_src.rows()));
    const Vector w_tgt = Vector::Constant(k_tgt.rows(), 1.0 / static_cast<double>(k_tgt.rows()));
    Matrix h = kernels::omp::weighted_gram(k_src, kernels::view(w_src));
    Vector hv = kernels::omp::weighted_row_sum(k_tgt, kernels::view(w_tgt));

    const Matrix system = h + lambda * Matrix::Identity(h.rows(), h.cols());
    Vector alpha = solve_symmetric(system, hv, "uLSIF system singular; use lambda > 0");
    // One step of iterative refinement keeps the residual at round-off level.
    alpha += solve_symmetric(system, Vector(hv - system * alpha), "uLSIF system singular; use lambda > 0");

    auto coef = std::make_shared<const Vector>(alpha);
    RatioEstimate est([basis, coef](const PointRef& x) { return (*basis)(x).dot(*coef); }, c_dr,
                      RatioMethod::ulsif);
    return {std::move(est), std::move(h), std::move(hv), std::move(alpha), lambda, basis->bandwidth,
            basis->centers};
}

RatioEstimate fit_ulsif(const PairedSample& sample, const KernelConfig& kernel, double lambda, double c_dr)
{
    return fit_ulsif_detailed(sample, kernel, lambda, c_dr).estimate;
}

LogisticFit fit_logistic_ratio_detailed(const PairedSample& sample, const LogisticConfig& opt, double c_dr)
{
    validate(sample);
    const Eigen::Index n_p = sample.n_source();
    const Eigen::Index n_q = sample.n_target();
    const Eigen::Index n = n_p + n_q;
    const Eigen::Index p = opt.intercept_only ? 1 : sample.dim() + 1;

    Points z(n, p);
    z.col(0).setOnes();
    if (!opt.intercept_only) {
        z.block(0, 1, n_p, sample.dim()) = sample.source_x;
        z.block(n_p, 1, n_q, sample.dim()) = sample.target_x;
    }
    Vector t = Vector::Zero(n);
    t.tail(n_q).setOnes();
    Vector penalty = Vector::Constant(p, opt.l2_penalty);
    penalty[0] = 0.0;

    const double inv_n = 1.0 / static_cast<double>(n);
    auto loss = [&](const Vector& w) {
        const Vector s = Matrix(z) * w;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            // log(1 + e^s) - t s, computed stably
            const double si = s[i];
            const double softplus = si > 0 ? si + std::log1p(std::exp(-si)) : std::log1p(std::exp(si));
            acc += softplus - t[i] * si;
        }
        return acc * inv_n + 0.5 * w.dot(penalty.asDiagonal() * w);
    };

    Vector w = Vector::Zero(p);
    // Start from the class-prior intercept.
    w[0] = std::log(static_cast<double>(n_q) / static_cast<double>(n_p));
    double grad_norm = 0.0;
    int it = 0;
    for (;; ++it) {
        const Vector s = Matrix(z) * w;
        Vector resid(n);
        Vector curv(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double pi = 1.0 / (1.0 + std::exp(-s[i]));
            resid[i] = (pi - t[i]) * inv_n;
            curv[i] = pi * (1.0 - pi) * inv_n;
        }
        const Vector grad = kernels::omp::weighted_row_sum(z, kernels::view(resid)) +
                            penalty.asDiagonal() * w;
        grad_norm = grad.norm();
        if (grad_norm <= opt.grad_tol) {
            break;
        }
        if (it >= opt.max_iters) {
            throw NumericalError("logistic ratio fit did not converge after " + std::to_string(opt.max_iters) +
                                 " iterations; final gradient norm " + format_double(grad_norm));
        }
        Matrix hess = kernels::omp::weighted_gram(z, kernels::view(curv));
        hess.diagonal() += penalty;
        // Levenberg-style floor keeps the Newton system solvable near separation.
        hess.diagonal().array() += 1e-12;
        const Vector step = solve_symmetric(hess, grad, "logistic ratio Hessian singular");
        const double f0 = loss(w);
        double alpha = 1.0;
        Vector next = w - step;
        while (loss(next) > f0 - 1e-4 * alpha * grad.dot(step) && alpha > 1e-12) {
            alpha *= 0.5;
            next = w - alpha * step;
        }
        w = next;
    }

    const double prior = static_cast<double>(n_p) / static_cast<double>(n_q);
    auto coef = std::make_shared<const Vector>(w);
    const bool intercept_only = opt.intercept_only;
    RatioEstimate est(
        [coef, prior, intercept_only](const PointRef& x) {
            double s = (*coef)[0];
            if (!intercept_only) {
                s += coef->tail(coef->size() - 1).dot(x);
            }
            return prior * std::exp(s);
        },
        c_dr, RatioMethod::logistic);
    return {std::move(est), w, it, grad_norm};
}

RatioEstimate fit_logistic_ratio(const PairedSample& sample, const LogisticConfig& opt, double c_dr)
{
    return fit_logistic_ratio_detailed(sample, opt, c_dr).estimate;
}

FeatureConfig::Kind parse_feature_kind(const std::string& name)
{
    if (name == "linear") {
        return FeatureConfig::Kind::linear;
    }
    if (name == "affine") {
        return FeatureConfig::Kind::affine;
    }
    if (name == "rbf") {
        return FeatureConfig::Kind::rbf;
    }
    throw ConfigError("config key pilot.reg.features: unknown feature map '" + name +
                      "' (expected linear, affine or rbf)");
}

RegressionEstimate fit_pilot_regression(const PairedSample& sample, const FeatureConfig& features,
                                        double ridge_lambda, double c_rf)
{
    validate(sample);
    if (!(ridge_lambda >= 0.0)) {
        throw ConfigError("config key pilot.reg.lambda: must be >= 0");
    }
    std::function<Vector(const PointRef&)> map;
    switch (features.kind) {
    case FeatureConfig::Kind::linear:
        map = [](const PointRef& x) { return Vector(x); };
        break;
    case FeatureConfig::Kind::affine:
        map = [](const PointRef& x) {
            Vector out(x.size() + 1);
            out[0] = 1.0;
            out.tail(x.size()) = x;
            return out;
        };
        break;
    case FeatureConfig::Kind::rbf: {
        auto basis = std::make_shared<RbfBasis>();
        const auto order = shuffled_indices(sample.n_source(), features.seed, "ridge.centers");
        basis->centers = take_rows(sample.source_x, order, static_cast<std::size_t>(features.max_centers));
        basis->bandwidth = features.bandwidth ? *features.bandwidth
                                              : median_pairwise_distance(take_rows(sample.source_x, order, 1000));
        map = [basis](const PointRef& x) {
            const Vector k = (*basis)(x);
            Vector out(k.size() + 1);
            out[0] = 1.0;
            out.tail(k.size()) = k;
            return out;
        };
        break;
    }
    }

    const Eigen::Index n = sample.n_source();
    const Eigen::Index p = map(sample.source_x.row(0).transpose()).size();
    Points phi(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        phi.row(i) = map(sample.source_x.row(i).transpose()).transpose();
    }
    const Vector w = Vector::Constant(n, 1.0 / static_cast<double>(n));
    Matrix gram = kernels::omp::weighted_gram(phi, kernels::view(w));
    gram.diagonal().array() += ridge_lambda;
    const Vector wy = w.cwiseProduct(sample.source_y);
    const Vector rhs = kernels::omp::weighted_row_sum(phi, kernels::view(wy));
    const Vector beta = solve_symmetric(gram, rhs, "ridge normal equations singular; use lambda > 0");

    auto coef = std::make_shared<const Vector>(beta);
    return RegressionEstimate([map, coef](const PointRef& x) { return map(x).dot(*coef); }, c_rf,
                              RegressionMethod::ridge);
}

Direction parse_direction(const std::string& spec, int dim)
{
    Direction d;
    d.coef = Vector::Zero(dim);
    if (spec == "constant") {
        d.offset = 1.0;
        return d;
    }
    std::string rest = spec;
    d.offset = 0.0;
    if (rest.rfind("1+", 0) == 0) {
        d.offset = 1.0;
        rest = rest.substr(2);
    }
    if (rest.size() >= 2 && rest[0] == 'x') {
        const auto k = parse_double(rest.substr(1));
        if (k && *k >= 1 && *k <= dim && std::floor(*k) == *k) {
            d.coef[static_cast<Eigen::Index>(*k) - 1] = 1.0;
            return d;
        }
    }
    throw ConfigError("unknown corruption direction '" + spec + "' (expected constant, x<k> or 1+x<k>)");
}

double direction_norm(const Direction& dir, const ShiftScenario& sc)
{
    Rng rng = make_rng(dir.norm_seed, "direction.norm");
    const Points x = sample_covariates(sc, Domain::source, dir.norm_mc_draws, rng);
    Vector g = Vector::Constant(x.rows(), dir.offset);
    if (dir.coef.size() > 0) {
        g += Matrix(x) * dir.coef;
    }
    const double n2 = kernels::omp::dot(kernels::view(g), kernels::view(g)) / static_cast<double>(g.size());
    if (!(n2 > 0.0)) {
        throw ConfigError("corruption direction has zero L2(P_X) norm");
    }
    return std::sqrt(n2);
}

namespace {

PointFunction perturbed(PointFunction base, double eps, const Direction& dir, double norm)
{
    if (eps == 0.0) {
        return base;
    }
    const double offset = dir.offset / norm;
    auto coef = std::make_shared<const Vector>(dir.coef / norm);
    return [base = std::move(base), eps, offset, coef](const PointRef& x) {
        double g = offset;
        if (coef->size() > 0) {
            g += coef->dot(x);
        }
        return base(x) + eps * g;
    };
}

} // namespace

RatioEstimate corrupt_pilot(const RatioEstimate& base, double eps, const Direction& dir, const ShiftScenario& sc)
{
    if (!(eps >= 0.0)) {
        throw ConfigError("config key pilot.corrupt.eps_ratio: must be >= 0");
    }
    if (eps == 0.0) {
        return base;
    }
    const double norm = direction_norm(dir, sc);
    return RatioEstimate(perturbed([base](const PointRef& x) { return base(x); }, eps, dir, norm), base.c_dr(),
                         RatioMethod::corrupted);
}

RegressionEstimate corrupt_pilot(const RegressionEstimate& base, double eps, const Direction& dir,
                                 const ShiftScenario& sc)
{
    if (!(eps >= 0.0)) {
        throw ConfigError("config key pilot.corrupt.eps_reg: must be >= 0");
    }
    if (eps == 0.0) {
        return base;
    }
    const double norm = direction_norm(dir, sc);
    return RegressionEstimate(perturbed([base](const PointRef& x) { return base(x); }, eps, dir, norm),
                              base.c_rf(), RegressionMethod::corrupted);
}

namespace {

template <class Estimate, class Oracle>
double l2_error(const Estimate& est, const ShiftScenario& sc, long long mc_n, std::uint64_t seed,
                const Oracle& oracle)
{
    if (mc_n < 1) {
        throw ConfigError("pilot error Monte Carlo size must be >= 1");
    }
    Rng rng = make_rng(seed, "pilot.l2");
    const Points x = sample_covariates(sc, Domain::source, mc_n, rng);
    const Vector e = est.evaluate(x);
    const Vector o = evaluate_rows(x, oracle);
    const Vector diff = e - o;
    return std::sqrt(kernels::omp::dot(kernels::view(diff), kernels::view(diff)) / static_cast<double>(mc_n));
}

template <class Estimate, class Oracle>
double calibrate(const Estimate& base, double target, const Direction& dir, const ShiftScenario& sc,
                 long long mc_n, std::uint64_t seed, double lo_clip, double hi_clip, const Oracle& oracle)
{
    if (!(target >= 0.0)) {
        throw ConfigError("target pilot error must be >= 0");
    }
    if (mc_n < 1) {
        throw ConfigError("pilot error Monte Carlo size must be >= 1");
    }
    Rng rng = make_rng(seed, "pilot.l2");
    const Points x = sample_covariates(sc, Domain::source, mc_n, rng);
    const Vector b = base.evaluate(x);
    const Vector o = evaluate_rows(x, oracle);
    const double norm = direction_norm(dir, sc);
    Vector g = Vector::Constant(x.rows(), dir.offset / norm);
    if (dir.coef.size() > 0) {
        g += Matrix(x) * (dir.coef / norm);
    }
    auto realized = [&](double eps) {
        const Vector c = (b + eps * g).cwiseMax(lo_clip).cwiseMin(hi_clip) - o;
        return std::sqrt(kernels::omp::dot(kernels::view(c), kernels::view(c)) / static_cast<double>(mc_n));
    };
    const double at_zero = realized(0.0);
    if (target <= at_zero) {
        return 0.0;
    }
    double hi = std::max(target, 1e-3);
    while (realized(hi) < target) {
        hi *= 2.0;
        if (hi > 1e6) {
            throw ConfigError("corruption target error " + format_double(target) +
                              " unreachable after clipping");
        }
    }
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (realized(mid) < target ? lo : hi) = mid;
    }
    return hi;
}

} // namespace

double calibrate_corruption(const RatioEstimate& base, double target, const Direction& dir,
                            const ShiftScenario& sc, long long mc_n, std::uint64_t seed)
{
    return calibrate(base, target, dir, sc, mc_n, seed, 0.0, base.c_dr(),
                     [&sc](const PointRef& x) { return oracle_density_ratio(sc, x); });
}

double calibrate_corruption(const RegressionEstimate& base, double target, const Direction& dir,
                            const ShiftScenario& sc, long long mc_n, std::uint64_t seed)
{
    return calibrate(base, target, dir, sc, mc_n, seed, -base.c_rf(), base.c_rf(),
                     [&sc](const PointRef& x) { return oracle_bayes(sc, x); });
}

double pilot_l2_error(const RatioEstimate& est, const ShiftScenario& sc, long long mc_n, std::uint64_t seed)
{
    return l2_error(est, sc, mc_n, seed, [&sc](const PointRef& x) { return oracle_density_ratio(sc, x); });
}

double pilot_l2_error(const RegressionEstimate& est, const ShiftScenario& sc, long long mc_n,
                      std::uint64_t seed)
{
    return l2_error(est, sc, mc_n, seed, [&sc](const PointRef& x) { return oracle_bayes(sc, x); });
}

} // namespace drshift
