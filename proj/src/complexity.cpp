#include "drshift/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "drshift/errors.hpp"
#include "drshift/kernels.hpp"

namespace drshift {

void validate(const FunctionClassSpec& spec)
{
    if (!(spec.bound_b >= 0.0)) {
        throw ConfigError("function class bound B must be >= 0");
    }
    switch (spec.kind) {
    case FunctionClassSpec::Kind::finite:
        if (spec.members.empty()) {
            throw ConfigError("finite function class must be nonempty");
        }
        break;
    case FunctionClassSpec::Kind::linear_ball:
        if (!(spec.radius > 0.0)) {
            throw ConfigError("linear-ball radius must be > 0");
        }
        break;
    case FunctionClassSpec::Kind::nn_frobenius:
        if (spec.depth < 1 || spec.depth > 3) {
            throw ConfigError("network depth must lie in 1..3");
        }
        if (static_cast<int>(spec.caps.size()) != spec.depth ||
            static_cast<int>(spec.widths.size()) != spec.depth - 1) {
            throw ConfigError("network needs depth Frobenius caps and depth - 1 hidden widths");
        }
        for (double c : spec.caps) {
            if (!(c > 0.0)) {
                throw ConfigError("Frobenius caps must be > 0");
            }
        }
        for (int w : spec.widths) {
            if (w < 1) {
                throw ConfigError("hidden widths must be >= 1");
            }
        }
        if (!(spec.lipschitz > 0.0) || !(spec.input_radius > 0.0)) {
            throw ConfigError("network Lipschitz constant and input radius must be > 0");
        }
        break;
    }
}

double nn_output_link(double lipschitz, double t)
{
    return 2.0 / std::numbers::pi * std::atan(std::numbers::pi * lipschitz * t / 2.0);
}

namespace {

double nn_output_d1(double lipschitz, double t)
{
    const double u = std::numbers::pi * lipschitz * t / 2.0;
    return lipschitz / (1.0 + u * u);
}

std::string mode_name(RadEstimate::Mode m)
{
    switch (m) {
    case RadEstimate::Mode::exact_enumeration: return "exact-enumeration";
    case RadEstimate::Mode::monte_carlo: return "monte-carlo";
    case RadEstimate::Mode::lower_bound: return "inner-maximization-lower-bound";
    }
    return "unknown";
}

/// Everything about the class that does not depend on the sign vector.
class InnerSup {
public:
    InnerSup(const FunctionClassSpec& spec, const Points& x, int starts, int steps)
        : spec_(spec), x_(x), starts_(starts), steps_(steps)
    {
        const Eigen::Index n = x.rows();
        offset_ = Vector::Zero(n);
        if (spec.offset) {
            for (Eigen::Index i = 0; i < n; ++i) {
                offset_[i] = spec.offset(x.row(i).transpose());
            }
        }
        if (spec.kind == FunctionClassSpec::Kind::finite) {
            values_.resize(static_cast<Eigen::Index>(spec.members.size()), n);
            for (std::size_t g = 0; g < spec.members.size(); ++g) {
                for (Eigen::Index i = 0; i < n; ++i) {
                    values_(static_cast<Eigen::Index>(g), i) = spec.members[g](x.row(i).transpose()) - offset_[i];
                }
            }
        } else if (spec.kind == FunctionClassSpec::Kind::linear_ball) {
            ParametricModel m(Link::identity, spec.features, static_cast<int>(x.cols()), 1.0);
            phi_ = m.feature_matrix(x);
        } else {
            for (Eigen::Index i = 0; i < n; ++i) {
                if (x.row(i).norm() > spec.input_radius * (1.0 + 1e-12)) {
                    throw ConfigError("network class input radius smaller than a sample point norm");
                }
            }
        }
    }

    double operator()(const Vector& sigma, std::uint64_t seed, long long index) const
    {
        const double n = static_cast<double>(sigma.size());
        switch (spec_.kind) {
        case FunctionClassSpec::Kind::finite:
            return (values_ * sigma).cwiseAbs().maxCoeff() / n;
        case FunctionClassSpec::Kind::linear_ball: {
            // sup over ||theta|| <= r of |a^T theta - c| = r ||a|| + |c|.
            const Vector a = phi_.transpose() * sigma / n;
            const double c = sigma.dot(offset_) / n;
            return spec_.radius * a.norm() + std::abs(c);
        }
        case FunctionClassSpec::Kind::nn_frobenius:
            return nn_sup(sigma, seed, index);
        }
        return 0.0;
    }

    bool exact_inner() const { return spec_.kind != FunctionClassSpec::Kind::nn_frobenius; }

private:
    using Layers = std::vector<Matrix>;

    /// (1/n) sum sigma_i (f(x_i) - offset_i), with the gradient w.r.t. each layer when requested.
    double nn_objective(const Layers& w, const Vector& sigma, Layers* grad) const
    {
        const Eigen::Index n = x_.rows();
        const int depth = spec_.depth;
        std::vector<Matrix> acts(static_cast<std::size_t>(depth));  // inputs to each layer, columns = points
        acts[0] = x_.transpose();
        for (int j = 1; j < depth; ++j) {
            acts[static_cast<std::size_t>(j)] = (w[static_cast<std::size_t>(j - 1)] * acts[static_cast<std::size_t>(j - 1)])
                                                    .cwiseMax(0.0);
        }
        const Eigen::RowVectorXd z = w.back() * acts.back();
        double value = 0.0;
        Eigen::RowVectorXd delta(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            value += sigma[i] * (nn_output_link(spec_.lipschitz, z[i]) - offset_[i]);
            delta[i] = sigma[i] * nn_output_d1(spec_.lipschitz, z[i]) / static_cast<double>(n);
        }
        value /= static_cast<double>(n);
        if (grad) {
            grad->resize(static_cast<std::size_t>(depth));
            Matrix back = delta;  // d objective / d pre-activation of the current layer
            for (int j = depth - 1; j >= 0; --j) {
                const auto ju = static_cast<std::size_t>(j);
                (*grad)[ju] = back * acts[ju].transpose();
                if (j > 0) {
                    back = (w[ju].transpose() * back).cwiseProduct(
                        acts[ju].unaryExpr([](double a) { return a > 0.0 ? 1.0 : 0.0; }));
                }
            }
        }
        return value;
    }

    void project(Layers& w) const
    {
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double norm = w[j].norm();
            if (norm > spec_.caps[j]) {
                w[j] *= spec_.caps[j] / norm;
            }
        }
    }

    double nn_sup(const Vector& sigma, std::uint64_t seed, long long index) const
    {
        const int depth = spec_.depth;
        std::vector<Eigen::Index> dims{x_.cols()};
        for (int wdt : spec_.widths) {
            dims.push_back(wdt);
        }
        dims.push_back(1);
        double best = 0.0;
        for (int s = 0; s < starts_; ++s) {
            Rng rng = make_rng(seed, "rad.nn.start", static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(s));
            std::normal_distribution<double> normal;
            Layers w(static_cast<std::size_t>(depth));
            for (int j = 0; j < depth; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                w[ju].resize(dims[ju + 1], dims[ju]);
                for (Eigen::Index a = 0; a < w[ju].size(); ++a) {
                    w[ju].data()[a] = normal(rng);
                }
                w[ju] *= spec_.caps[ju] / std::max(w[ju].norm(), 1e-300);
            }
            // Alternate the sign of the objective across starts so both tails of |.| are searched.
            const double direction = (s % 2 == 0) ? 1.0 : -1.0;
            double lr = 0.3;
            Layers grad;
            for (int t = 0; t <= steps_; ++t) {
                const double v = nn_objective(w, sigma, t < steps_ ? &grad : nullptr);
                best = std::max(best, std::abs(v));
                if (t == steps_) {
                    break;
                }
                for (std::size_t j = 0; j < w.size(); ++j) {
                    const double gn = grad[j].norm();
                    if (gn > 0.0) {
                        w[j] += direction * lr * spec_.caps[j] * grad[j] / gn;
                    }
                }
                project(w);
                lr *= 0.95;
            }
        }
        return best;
    }

    const FunctionClassSpec& spec_;
    const Points& x_;
    int starts_;
    int steps_;
    Vector offset_;
    Matrix values_;
    Points phi_;
};

} // namespace

std::string to_string(RadEstimate::Mode mode)
{
    return mode_name(mode);
}

RadEstimate empirical_rademacher(const FunctionClassSpec& spec, const Points& x, const SignConfig& signs,
                                 std::uint64_t seed)
{
    validate(spec);
    if (x.rows() == 0) {
        throw ConfigError("Rademacher estimate needs at least one point");
    }
    if (signs.n_signs < 2 || signs.nn_starts < 1 || signs.nn_steps < 0 || signs.exact_threshold < 0 ||
        signs.exact_threshold > 20) {
        throw ConfigError("config keys rad.*: need n_signs >= 2, nn_starts >= 1 and exact_threshold in 0..20");
    }
    const InnerSup sup(spec, x, signs.nn_starts, signs.nn_steps);

    const Eigen::Index n = x.rows();
    const bool enumerate = n <= signs.exact_threshold;
    const long long count = enumerate ? (1LL << n) : signs.n_signs;
    Vector values(count);
#pragma omp parallel for schedule(dynamic, 16)
    for (long long k = 0; k < count; ++k) {
        Vector sigma(n);
        if (enumerate) {
            for (Eigen::Index i = 0; i < n; ++i) {
                sigma[i] = ((k >> i) & 1LL) ? 1.0 : -1.0;
            }
        } else {
            Rng rng = make_rng(seed, "rad.signs", static_cast<std::uint64_t>(k));
            for (Eigen::Index i = 0; i < n; ++i) {
                sigma[i] = (rng() & 1ULL) ? 1.0 : -1.0;
            }
        }
        values[k] = sup(sigma, seed, k);
    }

    RadEstimate est;
    est.n_points = n;
    est.n_sign_draws = count;
    est.value = kernels::mean(kernels::view(values));
    if (!sup.exact_inner()) {
        est.mode = RadEstimate::Mode::lower_bound;
    } else {
        est.mode = enumerate ? RadEstimate::Mode::exact_enumeration : RadEstimate::Mode::monte_carlo;
    }
    if (!enumerate) {
        const Vector c = values.array() - est.value;
        const double var = c.squaredNorm() / static_cast<double>(count - 1);
        est.std_error = std::sqrt(var / static_cast<double>(count));
    }
    return est;
}

RadEstimate rademacher_under_law(const FunctionClassSpec& spec, const ShiftScenario& sc, Domain law, long long n,
                                 long long n_outer, const SignConfig& signs, std::uint64_t seed)
{
    if (n < 1 || n_outer < 1) {
        throw ConfigError("config keys rad.n and rad.n_outer must be >= 1");
    }
    Vector values(n_outer);
    RadEstimate first;
    for (long long r = 0; r < n_outer; ++r) {
        Rng rng = make_rng(seed, "rad.outer", static_cast<std::uint64_t>(r), law == Domain::source ? 0 : 1);
        const Points x = sample_covariates(sc, law, n, rng);
        const RadEstimate e = empirical_rademacher(spec, x, signs, derive_seed(seed, "rad.inner", static_cast<std::uint64_t>(r)));
        values[r] = e.value;
        if (r == 0) {
            first = e;
        }
    }
    RadEstimate out = first;
    out.value = kernels::mean(kernels::view(values));
    out.std_error = 0.0;
    if (n_outer > 1) {
        const Vector c = values.array() - out.value;
        out.std_error = std::sqrt(c.squaredNorm() / static_cast<double>(n_outer - 1) / static_cast<double>(n_outer));
    }
    if (out.mode == RadEstimate::Mode::exact_enumeration && n_outer > 1) {
        out.mode = RadEstimate::Mode::monte_carlo;
    }
    return out;
}

double BoundTerms::total() const
{
    double s = 0.0;
    for (const auto& t : terms) {
        s += t.second;
    }
    return s;
}

BoundTerms finite_class_bound_terms(double b, long long class_size, double n)
{
    if (!(b >= 0.0) || class_size < 1 || !(n >= 1.0)) {
        throw ConfigError("finite class bound needs B >= 0, size >= 1 and n >= 1");
    }
    return {{{"2B sqrt(log(2|F|)/n)", 2.0 * b * std::sqrt(std::log(2.0 * static_cast<double>(class_size)) / n)}}};
}

double finite_class_bound(double b, long long class_size, double n)
{
    return finite_class_bound_terms(b, class_size, n).total();
}

BoundTerms nn_class_bound_terms(double lipschitz, double radius, int depth, const std::vector<double>& caps,
                                double n)
{
    if (!(lipschitz > 0.0) || !(radius > 0.0) || depth < 1 || static_cast<int>(caps.size()) != depth ||
        !(n >= 1.0)) {
        throw ConfigError("network bound needs L, R > 0, depth >= 1, one cap per layer and n >= 1");
    }
    double prod = 1.0;
    for (double c : caps) {
        if (!(c > 0.0)) {
            throw ConfigError("Frobenius caps must be > 0");
        }
        prod *= c;
    }
    const double scale = 2.0 / std::sqrt(n);
    const double capacity =
        scale * lipschitz * radius * (1.0 + std::sqrt(2.0 * std::log(2.0) * static_cast<double>(depth))) * prod;
    return {{{"network capacity", capacity}, {"shift offset", scale * std::sqrt(std::log(2.0))}}};
}

double nn_class_bound(double lipschitz, double radius, int depth, const std::vector<double>& caps, double n)
{
    return nn_class_bound_terms(lipschitz, radius, depth, caps, n).total();
}

BoundTerms structure_agnostic_bound_terms(const AgnosticInputs& in)
{
    // Any delta in (0, 3) keeps log(3 / delta) positive.
    if (!(in.delta > 0.0 && in.delta < 3.0)) {
        throw ConfigError("config key theorem.delta: must lie in (0, 3) for the structure-agnostic bound");
    }
    if (in.err_rho < 0 || in.err_f < 0 || in.c_dr < 0 || in.c_rf < 0 || in.rad_p < 0 || in.rad_q < 0 ||
        !(in.n_p > 0) || !(in.n_q > 0)) {
        throw ConfigError("structure-agnostic bound inputs must be nonnegative with n_P, n_Q > 0");
    }
    const double l = std::log(3.0 / in.delta);
    const double sp = std::sqrt(in.n_p);
    const double sq = std::sqrt(in.n_q);
    BoundTerms t;
    t.terms = {
        {"pilot product", 4.0 * in.err_rho * in.err_f},
        {"fast deviation", 12.0 * (2.0 + in.c_rf) * l * (in.c_dr / in.n_p + 1.0 / in.n_q)},
        {"slow deviation", 4.0 * (1.0 + in.c_dr) * (2.0 + in.c_rf) * std::sqrt(2.0 * l) * (1.0 / sp + 1.0 / sq)},
        {"complexity deviation", 8.0 * (1.0 + in.c_dr) * (2.0 + in.c_rf) * std::sqrt(l) * (in.rad_p / sp + in.rad_q / sq)},
        {"source complexity", 8.0 * in.c_dr * (1.0 + in.c_rf) * in.rad_p},
        {"target complexity", 8.0 * (3.0 + in.c_rf) * in.rad_q},
    };
    return t;
}

double structure_agnostic_bound(const AgnosticInputs& in)
{
    return structure_agnostic_bound_terms(in).total();
}

} // namespace drshift
