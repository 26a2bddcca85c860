#include "drshift/paramdr.hpp"

#include <algorithm>
#include <cmath>

#include "drshift/errors.hpp"
#include "drshift/kernels.hpp"
#include "drshift/linalg.hpp"

namespace drshift {

namespace {

Vector link_values(Link link, const Vector& u)
{
    return u.unaryExpr([link](double v) { return link_value(link, v); });
}

Vector link_first(Link link, const Vector& u)
{
    return u.unaryExpr([link](double v) { return link_d1(link, v); });
}

Vector link_second(Link link, const Vector& u)
{
    return u.unaryExpr([link](double v) { return link_d2(link, v); });
}

void check_theta(const DrProblem& p, const Vector& theta)
{
    if (theta.size() != p.model.dim_theta()) {
        throw ConfigError("theta has dimension " + std::to_string(theta.size()) + ", model expects " +
                          std::to_string(p.model.dim_theta()));
    }
}

} // namespace

DrProblem make_dr_problem(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                          const ParametricModel& model)
{
    validate(sample);
    if (sample.dim() != model.input_dim()) {
        throw ConfigError("sample dimension does not match model input dimension");
    }
    return {model,
            model.feature_matrix(sample.source_x),
            model.feature_matrix(sample.target_x),
            sample.source_y,
            rho.evaluate(sample.source_x),
            f0.evaluate(sample.source_x),
            f0.evaluate(sample.target_x)};
}

double dr_risk(const DrProblem& p, const Vector& theta)
{
    check_theta(p, theta);
    const Link link = p.model.link();
    const Vector f_src = link_values(link, Matrix(p.phi_source) * theta);
    const Vector f_tgt = link_values(link, Matrix(p.phi_target) * theta);
    const Vector src = p.rho_source.array() *
                       ((p.y - f_src).array().square() - (p.f0_source - f_src).array().square());
    const Vector tgt = (p.f0_target - f_tgt).array().square();
    return kernels::mean(kernels::view(src)) + kernels::mean(kernels::view(tgt));
}

Vector dr_gradient(const DrProblem& p, const Vector& theta)
{
    check_theta(p, theta);
    const Link link = p.model.link();
    const double n_p = static_cast<double>(p.phi_source.rows());
    const double n_q = static_cast<double>(p.phi_target.rows());
    const Vector u_src = Matrix(p.phi_source) * theta;
    const Vector u_tgt = Matrix(p.phi_target) * theta;
    const Vector w_src = (2.0 / n_p) * p.rho_source.array() * (p.f0_source - p.y).array() *
                         link_first(link, u_src).array();
    const Vector w_tgt = (2.0 / n_q) * (link_values(link, u_tgt) - p.f0_target).array() *
                         link_first(link, u_tgt).array();
    return kernels::omp::weighted_row_sum(p.phi_source, kernels::view(w_src)) +
           kernels::omp::weighted_row_sum(p.phi_target, kernels::view(w_tgt));
}

Matrix target_gram(const DrProblem& p)
{
    const Vector w = Vector::Constant(p.phi_target.rows(), 1.0 / static_cast<double>(p.phi_target.rows()));
    return kernels::omp::weighted_gram(p.phi_target, kernels::view(w));
}

Matrix dr_hessian(const DrProblem& p, const Vector& theta)
{
    check_theta(p, theta);
    const Link link = p.model.link();
    if (link == Link::identity) {
        // Source curvature vanishes and the target term is 2 phi phi^T.
        return 2.0 * target_gram(p);
    }
    const double n_p = static_cast<double>(p.phi_source.rows());
    const double n_q = static_cast<double>(p.phi_target.rows());
    const Vector u_src = Matrix(p.phi_source) * theta;
    const Vector u_tgt = Matrix(p.phi_target) * theta;
    const Vector w_src = (2.0 / n_p) * p.rho_source.array() * (p.f0_source - p.y).array() *
                         link_second(link, u_src).array();
    const Vector d1 = link_first(link, u_tgt);
    const Vector w_tgt = (2.0 / n_q) * (d1.array().square() + (link_values(link, u_tgt) - p.f0_target).array() *
                                                                  link_second(link, u_tgt).array());
    return kernels::omp::weighted_gram(p.phi_source, kernels::view(w_src)) +
           kernels::omp::weighted_gram(p.phi_target, kernels::view(w_tgt));
}

Vector dr_gradient(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                   const ParametricModel& model, const Vector& theta)
{
    return dr_gradient(make_dr_problem(sample, rho, f0, model), theta);
}

Matrix dr_hessian(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                  const ParametricModel& model, const Vector& theta)
{
    return dr_hessian(make_dr_problem(sample, rho, f0, model), theta);
}

Vector solve_linear_dr(const DrProblem& p, double ridge_eps)
{
    if (p.model.link() != Link::identity) {
        throw ConfigError("config key model.link: closed-form DR solve requires the identity link");
    }
    if (!(ridge_eps >= 0.0)) {
        throw ConfigError("config key model.ridge_eps: must be >= 0");
    }
    const Eigen::Index d = p.phi_target.cols();
    const std::string message = "target Gram singular (n_Q = " + std::to_string(p.phi_target.rows()) +
                                ", d = " + std::to_string(d) + "); need n_Q >= d or model.ridge_eps > 0";
    if (ridge_eps == 0.0 && p.phi_target.rows() < d) {
        throw NumericalError(message);
    }
    Matrix gram = target_gram(p);
    gram.diagonal().array() += ridge_eps;
    const double n_p = static_cast<double>(p.phi_source.rows());
    const double n_q = static_cast<double>(p.phi_target.rows());
    const Vector w_tgt = p.f0_target / n_q;
    const Vector w_src = p.rho_source.array() * (p.f0_source - p.y).array() / n_p;
    const Vector rhs = kernels::omp::weighted_row_sum(p.phi_target, kernels::view(w_tgt)) -
                       kernels::omp::weighted_row_sum(p.phi_source, kernels::view(w_src));
    return solve_symmetric(gram, rhs, message);
}

Vector solve_linear_dr(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                       const ParametricModel& model, double ridge_eps)
{
    return solve_linear_dr(make_dr_problem(sample, rho, f0, model), ridge_eps);
}

OptResult minimize_dr(const DrProblem& p, const Vector& theta0, const OptConfig& opt)
{
    check_theta(p, theta0);
    OptConfig o = opt;
    if (!o.radius) {
        o.radius = p.model.theta_radius();
    }
    return gradient_descent([&p](const Vector& t) { return dr_risk(p, t); },
                            [&p](const Vector& t) { return dr_gradient(p, t); }, theta0, o);
}

OptResult minimize_dr(const PairedSample& sample, const RatioEstimate& rho, const RegressionEstimate& f0,
                      const ParametricModel& model, const Vector& theta0, const OptConfig& opt)
{
    return minimize_dr(make_dr_problem(sample, rho, f0, model), theta0, opt);
}

Vector fit_weighted_least_squares(const ParametricModel& model, const Points& x, const Vector& y,
                                  const Vector& w, double ridge_eps, const OptConfig& opt)
{
    const Points phi = model.feature_matrix(x);
    const double n = static_cast<double>(x.rows());
    if (model.link() == Link::identity) {
        const Vector wn = w / n;
        Matrix gram = kernels::omp::weighted_gram(phi, kernels::view(wn));
        gram.diagonal().array() += ridge_eps;
        const Vector wy = wn.cwiseProduct(y);
        return solve_symmetric(gram, kernels::omp::weighted_row_sum(phi, kernels::view(wy)),
                               "weighted least-squares Gram singular; use model.ridge_eps > 0");
    }
    const Link link = model.link();
    auto objective = [&](const Vector& t) {
        const Vector r = w.array() * (y - link_values(link, Matrix(phi) * t)).array().square();
        return kernels::mean(kernels::view(r)) + ridge_eps * t.squaredNorm();
    };
    auto gradient = [&](const Vector& t) {
        const Vector u = Matrix(phi) * t;
        const Vector c = (2.0 / n) * w.array() * (link_values(link, u) - y).array() * link_first(link, u).array();
        return Vector(kernels::omp::weighted_row_sum(phi, kernels::view(c)) + 2.0 * ridge_eps * t);
    };
    OptConfig o = opt;
    if (!o.radius) {
        o.radius = model.theta_radius();
    }
    return gradient_descent(objective, gradient, Vector::Zero(model.dim_theta()), o).theta;
}

Matrix empirical_fisher(const Points& x, const ParametricModel& model, const Vector& theta)
{
    if (x.rows() == 0) {
        throw ConfigError("empirical Fisher needs at least one point");
    }
    const Points phi = model.feature_matrix(x);
    const Vector d1 = link_first(model.link(), Matrix(phi) * theta);
    const Vector w = (2.0 / static_cast<double>(x.rows())) * d1.array().square();
    return kernels::omp::weighted_gram(phi, kernels::view(w));
}

double fisher_mismatch_trace(const FisherPair& fp)
{
    // Tr(I_P I_Q^{-1}) = Tr(I_Q^{-1} I_P) for the solve I_Q X = I_P.
    return solve_symmetric(fp.i_q, fp.i_p, "target Fisher singular").trace();
}

BConstants b_constants(double b1, double b2, double b3, double c_dr, double c_rf)
{
    if (b1 < 0 || b2 < 0 || b3 < 0 || c_dr < 0 || c_rf < 0) {
        throw ConfigError("smoothness and clipping constants must be >= 0");
    }
    const double a = (1.0 + c_dr) * (1.0 + c_rf);
    BConstants out;
    out.b1 = 4.0 * a * b1;
    out.b2 = 8.0 * std::sqrt(2.0) *
             std::max(c_dr * (1.0 + c_rf) * b2, b1 * b1 + (1.0 + c_rf) * (1.0 + c_rf) * b2);
    out.b3 = std::max(2.0 * a, 4.0) * b3 + 6.0 * b1 * b2;
    return out;
}

namespace {

void check_delta(double delta)
{
    if (!(delta > 0.0 && delta < 1.0)) {
        throw ConfigError("config key theorem.delta: must lie in (0, 1)");
    }
}

struct FisherTraces {
    double p_q1 = 0.0;   // Tr(I_P I_Q^{-1})
    double p_q2 = 0.0;   // Tr(I_P I_Q^{-2})
    double q1 = 0.0;     // Tr(I_Q^{-1})
    double q1_op = 0.0;  // ||I_Q^{-1}||_op
};

FisherTraces fisher_traces(const FisherPair& fp)
{
    const std::string msg = "target Fisher singular";
    const Matrix q_inv = solve_symmetric(fp.i_q, Matrix(Matrix::Identity(fp.i_q.rows(), fp.i_q.cols())), msg);
    const Matrix q_inv_p = solve_symmetric(fp.i_q, fp.i_p, msg);
    FisherTraces t;
    t.p_q1 = q_inv_p.trace();
    // Tr(I_P I_Q^{-2}) = Tr(I_Q^{-1} (I_Q^{-1} I_P)).
    t.p_q2 = (q_inv * q_inv_p).trace();
    t.q1 = q_inv.trace();
    t.q1_op = operator_norm_symmetric(0.5 * (q_inv + q_inv.transpose()));
    return t;
}

} // namespace

double parametric_bound(const FisherPair& fp, const TheoremConstants& tc, int d, double n_p, double n_q)
{
    check_delta(tc.delta);
    const double a = tc.k_abs * (1.0 + tc.c_dr) * (1.0 + tc.c_rf);
    return 18.0 * a * a * std::log(d / tc.delta) * (fisher_mismatch_trace(fp) / n_p + d / n_q);
}

double confidence_radius(const FisherPair& fp, const TheoremConstants& tc, double n_p, double n_q)
{
    check_delta(tc.delta);
    const FisherTraces t = fisher_traces(fp);
    const double d = static_cast<double>(fp.i_q.rows());
    return 3.0 * tc.k_abs * (1.0 + tc.c_dr) * (1.0 + tc.c_rf) * std::sqrt(std::log(d / tc.delta)) *
           (std::sqrt(t.p_q2 / n_p) + std::sqrt(t.q1 / n_q));
}

Thresholds sample_size_thresholds(const FisherPair& fp, const TheoremConstants& tc, int d)
{
    const FisherTraces t = fisher_traces(fp);
    const double op2 = t.q1_op * t.q1_op;
    const double m = std::min(t.p_q2, t.q1);
    const double tr = t.p_q2 + t.q1;

    Thresholds out;
    out.n1 = op2 * std::max({1.0, tr, std::pow(m, -2.0 / 3.0), std::pow(m, -0.5)});
    const double mu = std::min(t.p_q1, static_cast<double>(d));
    out.n2 = std::max({(tr / mu) * (tr / mu), tr * tr * tr / (mu * mu), std::pow(op2 / mu, 2.0 / 3.0),
                       std::pow(op2 * t.q1_op / mu, 0.5), t.q1_op / mu});
    out.n_star = std::max(out.n1, out.n2);

    const BConstants b = b_constants(tc.smooth.b1, tc.smooth.b2, tc.smooth.b3, tc.c_dr, tc.c_rf);
    const double a = (1.0 + tc.c_dr) * (1.0 + tc.c_rf);
    const double ka = tc.k_abs * a;
    out.kappa = std::max({(260.0 * b.b2) * (260.0 * b.b2), (860.0 * b.b3 / 3.0 * ka) * (860.0 * b.b3 / 3.0 * ka),
                          std::pow(160.0 * b.b1 * b.b1 * b.b2 / (a * a), 2.0 / 3.0),
                          std::pow(640.0 * b.b1 * b.b1 * b.b1 * b.b3 / (3.0 * a * a), 0.5),
                          80.0 * b.b1 * b.b1 / (a * a)});
    out.kappa_bar = std::max({out.kappa, (2.0 * b.b3 * ka) * (2.0 * b.b3 * ka), 18.0 * ka * ka});
    return out;
}

} // namespace drshift
