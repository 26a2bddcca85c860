// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "drshift/cli.hpp"
#include "drshift/complexity.hpp"
#include "drshift/harness.hpp"
#include "drshift/kernels.hpp"
#include "drshift/paramdr.hpp"

using namespace drshift;

namespace {

const std::filesystem::path kConfigs = DRSHIFT_CONFIG_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v)
{
    const double n = static_cast<double>(v.size());
    double m = 0.0;
    for (double x : v) {
        m += x;
    }
    m /= n;
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    return {m, std::sqrt(ss / (n - 1.0) / n)};
}

// 1, 2 -------------------------------------------------------------------------

DrProblem random_problem(Link link, Features features, int dim, std::uint64_t seed)
{
    Rng rng = make_rng(seed, "acceptance.problem");
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_int_distribution<int> size(5, 60);
    const int n_p = size(rng);
    const int n_q = size(rng) + dim + 1;
    PairedSample s;
    s.source_x.resize(n_p, dim);
    s.source_y.resize(n_p);
    s.target_x.resize(n_q, dim);
    for (int i = 0; i < n_p; ++i) {
        for (int k = 0; k < dim; ++k) {
            s.source_x(i, k) = 0.7 * nd(rng);
        }
        s.source_y[i] = unit(rng);
    }
    for (int i = 0; i < n_q; ++i) {
        for (int k = 0; k < dim; ++k) {
            s.target_x(i, k) = 0.7 * nd(rng) + 0.4;
        }
    }
    Vector a(dim);
    for (int k = 0; k < dim; ++k) {
        a[k] = nd(rng);
    }
    const RatioEstimate rho([a](const PointRef& x) { return std::exp(0.4 * a.dot(x)); }, 30.0, RatioMethod::constant);
    const RegressionEstimate f0([a](const PointRef& x) { return 0.6 * std::sin(a.dot(x)); }, 1.0,
                                RegressionMethod::constant);
    return make_dr_problem(s, rho, f0, ParametricModel(link, features, dim, 3.0));
}

Vector random_vector(std::uint64_t seed, int d, double scale)
{
    Rng rng = make_rng(seed, "acceptance.theta");
    std::normal_distribution<double> nd;
    Vector t(d);
    for (int k = 0; k < d; ++k) {
        t[k] = scale * nd(rng);
    }
    return t;
}

Outcome derivative_fidelity()
{
    const double h = 1e-5;
    double worst_g = 0.0;
    double worst_h = 0.0;
    for (Link link : {Link::identity, Link::bounded_arctan}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const DrProblem p = random_problem(link, seed % 2 ? Features::affine : Features::linear,
                                               1 + static_cast<int>(seed % 5), seed + (link == Link::identity ? 0 : 1000));
            const Vector theta = random_vector(seed, p.model.dim_theta(), 0.8);
            const Eigen::Index d = theta.size();
            Vector g_fd(d);
            Matrix h_fd(d, d);
            for (Eigen::Index k = 0; k < d; ++k) {
                Vector a = theta;
                Vector b = theta;
                a[k] += h;
                b[k] -= h;
                g_fd[k] = (dr_risk(p, a) - dr_risk(p, b)) / (2 * h);
                h_fd.col(k) = (dr_gradient(p, a) - dr_gradient(p, b)) / (2 * h);
            }
            const Vector g = dr_gradient(p, theta);
            const Matrix hm = dr_hessian(p, theta);
            worst_g = std::max(worst_g, (g - g_fd).norm() / std::max(1.0, g.norm()));
            worst_h = std::max(worst_h, (hm - h_fd).norm() / std::max(1.0, hm.norm()));
        }
    }
    return {worst_g <= 1e-5 && worst_h <= 1e-4,
            fmt("max rel error gradient %.2e (<= 1e-5), Hessian %.2e (<= 1e-4), 40 configs", worst_g, worst_h)};
}

Outcome closed_form()
{
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const DrProblem p = random_problem(Link::identity, seed % 2 ? Features::affine : Features::linear,
                                           1 + static_cast<int>(seed % 4), 500 + seed);
        const Vector closed = solve_linear_dr(p);
        const OptResult it = minimize_dr(p, Vector::Zero(closed.size()));
        worst = std::max(worst, (it.theta - closed).norm());
    }
    PairedSample s;
    s.source_x = Points::Constant(1, 1, 1.0);
    s.source_y = Vector::Constant(1, 1.0);
    s.target_x = Points::Constant(1, 1, 1.0);
    const ParametricModel model(Link::identity, Features::linear, 1, 1.0);
    const RatioEstimate one = constant_ratio(1.0);
    const RegressionEstimate zero = constant_regression(0.0);
    const double hand_closed = std::abs(solve_linear_dr(s, one, zero, model)[0] - 1.0);
    const double hand_iter = std::abs(minimize_dr(s, one, zero, model, Vector::Zero(1)).theta[0] - 1.0);
    return {worst <= 1e-6 && hand_closed <= 1e-12 && hand_iter <= 1e-12,
            fmt("max ||closed - GD|| %.2e (<= 1e-6); hand instance |theta-1| closed %.1e, GD %.1e", worst,
                hand_closed, hand_iter)};
}

// 3, 4, 5, 9 -------------------------------------------------------------------

Outcome fast_rate()
{
    const RateStudyResult r = run_rate_study(Config::load(kConfigs / "rate_study.conf"));
    std::string medians;
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
        medians += fmt(" %.3g", r.stats[i].median);
    }
    return {r.fit.slope >= -1.25 && r.fit.slope <= -0.75,
            fmt("slope %.3f in [-1.25, -0.75];", r.fit.slope) + " medians" + medians};
}

const DRSweepResult& sweep()
{
    static const DRSweepResult r = run_double_robustness_sweep(Config::load(kConfigs / "dr_sweep.conf"));
    return r;
}

std::size_t grid_index(const std::vector<double>& grid, double v)
{
    const auto it = std::find_if(grid.begin(), grid.end(), [v](double g) { return std::abs(g - v) < 1e-12; });
    if (it == grid.end()) {
        throw ConfigError("sweep grid lacks the value " + std::to_string(v));
    }
    return static_cast<std::size_t>(it - grid.begin());
}

Outcome double_robustness()
{
    const DRSweepResult& r = sweep();
    const SweepCell& base = r.cell(0, 0);
    const SweepCell& bad_f = r.cell(0, grid_index(r.f_grid, 0.5));
    const SweepCell& bad_rho = r.cell(grid_index(r.rho_grid, 0.5), 0);
    const double dr_tol = 3.0 * base.dr_stats.iqr;
    const double d_f = std::abs(bad_f.dr_stats.median - base.dr_stats.median);
    const double d_rho = std::abs(bad_rho.dr_stats.median - base.dr_stats.median);
    const double iw_gap = bad_rho.iw_stats.median - base.iw_stats.median;
    const double iw_tol = 3.0 * base.iw_stats.iqr;
    return {d_f <= dr_tol && d_rho <= dr_tol && iw_gap >= iw_tol,
            fmt("DR shift f-axis %.2e, rho-axis %.2e (<= %.2e); IW degradation %.2e", d_f, d_rho, dr_tol, iw_gap) +
                fmt(" (>= %.2e)", iw_tol)};
}

Outcome product_bias()
{
    const DRSweepResult& r = sweep();
    const std::size_t f = grid_index(r.f_grid, 0.4);
    const double hi = r.cell(grid_index(r.rho_grid, 0.4), f).dr_bias;
    const double lo = r.cell(grid_index(r.rho_grid, 0.2), f).dr_bias;
    const double ratio = hi / lo;
    return {ratio >= 1.5 && ratio <= 3.0,
            fmt("bias(0.4,0.4) %.4g / bias(0.2,0.4) %.4g = %.3f, required [1.5, 3.0]", hi, lo, ratio)};
}

Outcome theorem_dominance()
{
    const DominanceResult r = run_dominance_check(Config::load(kConfigs / "dominance.conf"));
    std::vector<double> e = r.excess;
    std::vector<double> b = r.bound;
    return {r.covered_fraction >= 0.95 && r.excess.size() == 200,
            fmt("covered %.3f of %.0f replications (>= 0.95); median excess %.3g, median bound %.3g",
                r.covered_fraction, static_cast<double>(r.excess.size()), summarize(e).median, summarize(b).median)};
}

// 6 -------------------------------------------------------------------------------

Outcome goldens()
{
    const double nn = nn_class_bound(2.0 / std::numbers::pi, 1.0, 1, {1.0}, 100);
    const double fin = finite_class_bound(1.0, 2, 4);
    TheoremConstants tc;
    tc.k_abs = 1.0;
    tc.c_dr = 1.0;
    tc.c_rf = 1.0;
    tc.delta = 2.0 / std::numbers::e;
    FisherPair two;
    two.i_p = Matrix::Identity(2, 2);
    two.i_q = Matrix::Identity(2, 2);
    const double par = parametric_bound(two, tc, 2, 1000, 1000);
    tc.delta = 1.0 / std::numbers::e;
    FisherPair one;
    one.i_p = Matrix::Constant(1, 1, 2.0);
    one.i_q = Matrix::Constant(1, 1, 2.0);
    const double rad = confidence_radius(one, tc, 50, 50);
    const bool ok = std::abs(nn - 0.443747) <= 1e-6 && std::abs(fin - 1.177410) <= 1e-6 &&
                    std::abs(par - 1.152) <= 1e-9 && std::abs(rad - 2.4) <= 1e-9;
    return {ok, fmt("nn %.9g, finite %.9g, parametric %.12g, radius %.12g", nn, fin, par, rad)};
}

// 7 -------------------------------------------------------------------------------

Outcome rademacher_dominance()
{
    Rng rng = make_rng(2024, "acceptance.finite");
    std::uniform_int_distribution<int> size(2, 16);
    std::uniform_int_distribution<int> npts(1, 12);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    int finite_ok = 0;
    for (int c = 0; c < 50; ++c) {
        const int m = size(rng);
        const int n = npts(rng);
        FunctionClassSpec spec;
        for (int j = 0; j < m; ++j) {
            const double a = unit(rng);
            const double b = unit(rng);
            spec.members.push_back([a, b](const PointRef& x) { return std::clamp(a * x[0] + b * x[1], -1.0, 1.0); });
        }
        Points x(n, 2);
        for (int i = 0; i < n; ++i) {
            x(i, 0) = 2.0 * unit(rng);
            x(i, 1) = 2.0 * unit(rng);
        }
        const RadEstimate e = empirical_rademacher(spec, x, SignConfig{}, static_cast<std::uint64_t>(c));
        finite_ok += e.mode == RadEstimate::Mode::exact_enumeration && e.value <= finite_class_bound(1.0, m, n);
    }

    const ShiftScenario sc(scenario_preset("well-specified"));
    FunctionClassSpec nn;
    nn.kind = FunctionClassSpec::Kind::nn_frobenius;
    nn.depth = 1;
    nn.caps = {1.0};
    nn.input_radius = sc.trunc_radius();
    int nn_ok = 0;
    std::string nn_detail;
    for (long long n : {25LL, 100LL, 400LL}) {
        Rng pr = make_rng(2024, "acceptance.nn", static_cast<std::uint64_t>(n));
        const Points x = sample_covariates(sc, Domain::source, n, pr);
        const RadEstimate e = empirical_rademacher(nn, x, SignConfig{}, 99);
        const double bound = nn_class_bound(nn.lipschitz, nn.input_radius, 1, nn.caps, static_cast<double>(n));
        nn_ok += e.mode == RadEstimate::Mode::lower_bound && e.value <= bound;
        nn_detail += fmt(" n=%.0f %.3g<=%.3g", static_cast<double>(n), e.value, bound);
    }
    return {finite_ok == 50 && nn_ok == 3,
            fmt("finite classes %.0f/50 dominated; nn", finite_ok) + nn_detail};
}

// 8 -------------------------------------------------------------------------------

Outcome oracle_identities()
{
    const ShiftScenario sc(scenario_preset("well-specified"));
    const RatioEstimate rho = oracle_ratio(sc, 1e9);
    int iw_ok = 0;
    for (std::uint64_t k = 0; k < 5; ++k) {
        const Predictor f = make_linear_predictor(Features::linear, random_vector(k, 5, 0.1));
        const PairedSample s = sample_dataset(sc, 100'000, 1, derive_seed(8, "acceptance.iw", k));
        const Vector w = rho.evaluate(s.source_x);
        const Vector fv = f.evaluate(s.source_x);
        std::vector<double> terms(static_cast<std::size_t>(w.size()));
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            terms[static_cast<std::size_t>(i)] = w[i] * (s.source_y[i] - fv[i]) * (s.source_y[i] - fv[i]);
        }
        const MeanSe m = mean_se(terms);
        iw_ok += std::abs(m.mean - population_q_risk(sc, f).value) <= 4.0 * m.se;
    }

    int dr_ok = 0;
    const RegressionEstimate f0 = constant_regression(-0.2);
    for (std::uint64_t k = 0; k < 3; ++k) {
        const Predictor f = make_linear_predictor(Features::linear, random_vector(100 + k, 5, 0.1));
        std::vector<double> risks;
        for (std::uint64_t r = 0; r < 200; ++r) {
            risks.push_back(dr_empirical_risk(sample_dataset(sc, 200, 200, derive_seed(8, "acceptance.dr", k, r)),
                                              rho, f0, f));
        }
        const MeanSe m = mean_se(risks);
        dr_ok += std::abs(m.mean - population_q_risk(sc, f).value) <= 4.0 * m.se;
    }

    const ParametricModel model(Link::identity, Features::affine, sc.dim(), sc.trunc_radius());
    const FisherPair fp = oracle_fisher(sc, model);
    Rng rng = make_rng(8, "acceptance.fisher");
    const Points xq = sample_covariates(sc, Domain::target, 100'000, rng);
    const Matrix emp = empirical_fisher(xq, model, Vector::Zero(model.dim_theta()));
    const double fisher_rel = (emp - fp.i_q).norm() / fp.i_q.norm();

    const Matrix a = random_vector(7, 16, 1.0).reshaped(4, 4);
    FisherPair same;
    same.i_q = a * a.transpose() + Matrix::Identity(4, 4);
    same.i_p = same.i_q;
    const double trace = fisher_mismatch_trace(same);
    return {iw_ok == 5 && dr_ok == 3 && fisher_rel <= 0.02 && trace == 4.0,
            fmt("IW identity %.0f/5, DR unbiased %.0f/3, Fisher rel error %.2e (<= 0.02), trace(I,I) = %.17g (d = 4)",
                iw_ok, dr_ok, fisher_rel, trace)};
}

// 10 ------------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism()
{
    const auto root = std::filesystem::temp_directory_path() / "drshift_acceptance_determinism";
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);

    auto derived = [&](const std::string& base, const std::string& extra) {
        const auto path = root / (base + ".conf");
        std::ofstream(path) << slurp(kConfigs / (base + ".conf")) << extra;
        return path.string();
    };
    const std::string rate = derived("rate_study", "harness.replications = 6\nharness.n_grid = 250, 500, 1000\n");
    const std::string sweep_cfg = derived("dr_sweep", "harness.replications = 6\nharness.n = 2000\n");
    const std::string compare = derived("compare", "harness.replications = 6\nharness.n = 1000\n");
    const std::string dominance = derived("dominance", "harness.replications = 12\n");
    const std::string fit = derived("rate_study", "harness.n = 800\n");
    const std::string rad = derived("rate_study", "rad.class = nn\nrad.n = 60\nrad.n_outer = 4\nrad.n_signs = 100\n");

    const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
        {"generate", {"generate", "--config", fit}},
        {"fit", {"fit", "--config", fit}},
        {"crossfit", {"crossfit", "--config", fit}},
        {"rate-study", {"rate-study", "--config", rate}},
        {"dr-sweep", {"dr-sweep", "--config", sweep_cfg}},
        {"compare", {"compare", "--config", compare}},
        {"rad", {"rad", "--config", rad}},
        {"dominance", {"bounds", "dominance", "--config", dominance}},
    };
    const int before = kernels::max_threads();
    const int many = std::max(4, before);
    int identical = 0;
    std::string mismatched;
    for (const auto& [name, args] : commands) {
        std::vector<std::string> outputs;
        for (int threads : {1, many}) {
            kernels::set_threads(threads);
            const auto dir = root / (name + "_" + std::to_string(threads));
            std::vector<std::string> a = args;
            a.insert(a.end(), {"--out", dir.string()});
            std::ostringstream out;
            std::ostringstream err;
            if (dispatch(a, out, err) != 0) {
                kernels::set_threads(before);
                return {false, name + " failed: " + err.str()};
            }
            std::string blob;
            std::vector<std::filesystem::path> files;
            for (const auto& e : std::filesystem::directory_iterator(dir)) {
                if (e.path().filename() != "timing.jsonl") {
                    files.push_back(e.path());
                }
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                blob += f.filename().string() + '\n' + slurp(f);
            }
            // Standard output may echo the output directory, which differs between the two runs.
            std::string printed = out.str();
            for (auto pos = printed.find(dir.string()); pos != std::string::npos; pos = printed.find(dir.string())) {
                printed.replace(pos, dir.string().size(), "<out>");
            }
            outputs.push_back(blob + printed);
        }
        if (outputs[0] == outputs[1] && !outputs[0].empty()) {
            ++identical;
        } else {
            mismatched += " " + name;
        }
    }
    kernels::set_threads(before);
    std::filesystem::remove_all(root);
    return {identical == static_cast<int>(commands.size()),
            fmt("%.0f/%.0f commands byte-identical at 1 and %.0f threads", identical,
                static_cast<double>(commands.size()), many) +
                (mismatched.empty() ? "" : "; differing:" + mismatched)};
}

struct Criterion {
    int id;
    std::string name;
    double budget_seconds;
    std::function<Outcome()> run;
};

} // namespace

int main()
{
    const std::vector<Criterion> criteria{
        {1, "derivative fidelity", 10, derivative_fidelity},
        {2, "closed-form correctness", 10, closed_form},
        {3, "parametric fast rate", 300, fast_rate},
        {4, "double robustness", 180, double_robustness},
        {5, "product-of-errors bias", 180, product_bias},
        {6, "bound formula goldens", 1, goldens},
        {7, "Rademacher dominance", 120, rademacher_dominance},
        {8, "oracle identities", 120, oracle_identities},
        {9, "excess risk bound dominance", 180, theorem_dominance},
        {10, "determinism", 0, determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = c.budget_seconds <= 0 || secs < c.budget_seconds;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("[%s] %2d %s: %s (%.1f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(),
                    secs, in_time ? "" : fmt(", over the %.0f s budget", c.budget_seconds).c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
