#include "drshift/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "drshift/complexity.hpp"
#include "drshift/errors.hpp"
#include "drshift/kernels.hpp"
#include "drshift/rng.hpp"

namespace drshift {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

RatioMethod parse_ratio_method(const std::string& name)
{
    if (name == "ulsif") return RatioMethod::ulsif;
    if (name == "logistic") return RatioMethod::logistic;
    if (name == "oracle") return RatioMethod::oracle;
    if (name == "constant") return RatioMethod::constant;
    throw ConfigError("config key pilot.ratio.method: unknown method '" + name +
                      "' (expected ulsif, logistic, oracle or constant)");
}

RegressionMethod parse_regression_method(const std::string& name)
{
    if (name == "ridge") return RegressionMethod::ridge;
    if (name == "oracle") return RegressionMethod::oracle;
    if (name == "constant") return RegressionMethod::constant;
    throw ConfigError("config key pilot.reg.method: unknown method '" + name +
                      "' (expected ridge, oracle or constant)");
}

std::vector<long long> int_list(const Config& cfg, const std::string& key, const std::vector<double>& fallback)
{
    std::vector<long long> out;
    for (double v : cfg.get_doubles(key, fallback)) {
        if (!(v >= 1.0) || std::floor(v) != v) {
            throw ConfigError("config key " + key + ": entries must be positive integers");
        }
        out.push_back(static_cast<long long>(v));
    }
    return out;
}

ScenarioConfig scenario_from_setup(const Config& cfg)
{
    Config sub = cfg.subtree("scenario");
    if (sub.entries().empty()) {
        sub.set("preset", "well-specified");
    }
    try {
        return scenario_config_from(sub);
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        const std::string tag = "config key ";
        if (msg.rfind(tag, 0) == 0) {
            msg.insert(tag.size(), "scenario.");
        }
        throw ConfigError(msg);
    }
}

json maybe_number(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

json stats_json(const Stats& s)
{
    return {{"median", s.median}, {"q1", s.q1}, {"q3", s.q3}, {"iqr", s.iqr}, {"mean", s.mean}, {"count", s.count}};
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Runs fn(task) for every task index in parallel, capturing exceptions per task.
template <class Fn>
std::vector<std::exception_ptr> run_tasks(long long count, const Fn& fn)
{
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 1)
    for (long long t = 0; t < count; ++t) {
        try {
            fn(t);
        } catch (...) {
            errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
    }
    return errors;
}

/// Rethrows the first failure of any cell whose replications all failed and
/// returns the number of failed replications.
int check_failures(const std::vector<std::exception_ptr>& errors, long long cells, long long reps)
{
    int failed = 0;
    for (long long c = 0; c < cells; ++c) {
        long long cell_failed = 0;
        std::exception_ptr first;
        for (long long r = 0; r < reps; ++r) {
            const auto& e = errors[static_cast<std::size_t>(c * reps + r)];
            if (e) {
                ++cell_failed;
                if (!first) {
                    first = e;
                }
            }
        }
        if (cell_failed == reps && first) {
            std::rethrow_exception(first);
        }
        failed += static_cast<int>(cell_failed);
    }
    return failed;
}

void apply_threads(const Config& cfg)
{
    const long long threads = cfg.get_int("harness.threads", 0);
    if (threads < 0) {
        throw ConfigError("config key harness.threads: must be >= 0");
    }
    if (threads > 0) {
        kernels::set_threads(static_cast<int>(threads));
    }
}

double measured_error(const RatioEstimate& rho, const ExperimentSetup& s, std::uint64_t seed)
{
    return s.error_draws > 0 ? pilot_l2_error(rho, s.scenario, s.error_draws, seed) : kNaN;
}

double measured_error(const RegressionEstimate& f0, const ExperimentSetup& s, std::uint64_t seed)
{
    return s.error_draws > 0 ? pilot_l2_error(f0, s.scenario, s.error_draws, seed) : kNaN;
}

} // namespace

PilotRecipe pilot_recipe_from(const Config& cfg)
{
    PilotRecipe r;
    r.ratio = parse_ratio_method(cfg.get_string("pilot.ratio.method", "ulsif"));
    r.regression = parse_regression_method(cfg.get_string("pilot.reg.method", "ridge"));
    r.ratio_lambda = cfg.get_double("pilot.ratio.lambda", r.ratio_lambda);
    r.kernel.max_centers = static_cast<int>(cfg.get_int("pilot.ratio.centers", r.kernel.max_centers));
    if (cfg.has("pilot.ratio.bandwidth")) {
        r.kernel.bandwidth = cfg.get_double("pilot.ratio.bandwidth");
    }
    const std::string basis = cfg.get_string("pilot.ratio.basis", "gaussian");
    if (basis == "gaussian") {
        r.kernel.basis = KernelConfig::Basis::gaussian;
    } else if (basis == "constant") {
        r.kernel.basis = KernelConfig::Basis::constant;
    } else {
        throw ConfigError("config key pilot.ratio.basis: expected gaussian or constant");
    }
    r.logistic.l2_penalty = cfg.get_double("pilot.ratio.l2", r.logistic.l2_penalty);
    r.logistic.max_iters = static_cast<int>(cfg.get_int("pilot.ratio.max_iters", r.logistic.max_iters));
    r.logistic.grad_tol = cfg.get_double("pilot.ratio.tol", r.logistic.grad_tol);
    r.constant_ratio = cfg.get_double("pilot.ratio.constant", r.constant_ratio);
    r.features.kind = parse_feature_kind(cfg.get_string("pilot.reg.features", "affine"));
    r.features.max_centers = static_cast<int>(cfg.get_int("pilot.reg.centers", r.features.max_centers));
    if (cfg.has("pilot.reg.bandwidth")) {
        r.features.bandwidth = cfg.get_double("pilot.reg.bandwidth");
    }
    r.reg_lambda = cfg.get_double("pilot.reg.lambda", r.reg_lambda);
    r.constant_regression = cfg.get_double("pilot.reg.constant", r.constant_regression);
    r.c_dr = cfg.get_double("pilot.clip.c_dr", r.c_dr);
    r.c_rf = cfg.get_double("pilot.clip.c_rf", r.c_rf);
    if (!(r.c_dr > 0.0)) {
        throw ConfigError("config key pilot.clip.c_dr: must be > 0");
    }
    if (!(r.c_rf > 0.0)) {
        throw ConfigError("config key pilot.clip.c_rf: must be > 0");
    }
    return r;
}

Pilots fit_pilots(const PairedSample& sample, const ShiftScenario& sc, const PilotRecipe& recipe,
                  std::uint64_t seed)
{
    auto ratio = [&]() -> RatioEstimate {
        switch (recipe.ratio) {
        case RatioMethod::ulsif: {
            KernelConfig k = recipe.kernel;
            k.seed = derive_seed(seed, "pilot.ratio");
            return fit_ulsif(sample, k, recipe.ratio_lambda, recipe.c_dr);
        }
        case RatioMethod::logistic:
            return fit_logistic_ratio(sample, recipe.logistic, recipe.c_dr);
        case RatioMethod::oracle:
            return oracle_ratio(sc, recipe.c_dr);
        case RatioMethod::constant:
        case RatioMethod::corrupted:
            break;
        }
        return constant_ratio(recipe.constant_ratio, recipe.c_dr);
    };
    auto regression = [&]() -> RegressionEstimate {
        switch (recipe.regression) {
        case RegressionMethod::ridge: {
            FeatureConfig f = recipe.features;
            f.seed = derive_seed(seed, "pilot.reg");
            return fit_pilot_regression(sample, f, recipe.reg_lambda, recipe.c_rf);
        }
        case RegressionMethod::oracle:
            return oracle_regression(sc, recipe.c_rf);
        case RegressionMethod::constant:
        case RegressionMethod::corrupted:
            break;
        }
        return constant_regression(recipe.constant_regression, recipe.c_rf);
    };
    return {ratio(), regression()};
}

ExperimentSetup make_setup(const Config& cfg)
{
    apply_threads(cfg);
    ShiftScenario sc(scenario_from_setup(cfg));
    const Link link = parse_link(cfg.get_string("model.link", "identity"));
    const Features features = parse_features(cfg.get_string("model.features", "affine"));
    std::optional<double> theta_radius;
    if (cfg.has("model.theta_radius")) {
        theta_radius = cfg.get_double("model.theta_radius");
    }
    ParametricModel model(link, features, sc.dim(), sc.trunc_radius(), theta_radius);

    OptConfig opt;
    opt.tol = cfg.get_double("opt.tol", opt.tol);
    opt.max_iters = static_cast<int>(cfg.get_int("opt.max_iters", opt.max_iters));
    if (!(opt.tol > 0.0) || opt.max_iters < 0) {
        throw ConfigError("config keys opt.tol and opt.max_iters: need tol > 0 and max_iters >= 0");
    }

    PilotRecipe pilots = pilot_recipe_from(cfg);
    TheoremConstants tc;
    tc.k_abs = cfg.get_double("theorem.k_abs", 1.0);
    tc.delta = cfg.get_double("theorem.delta", 0.05);
    tc.c_dr = pilots.c_dr;
    tc.c_rf = pilots.c_rf;
    tc.smooth = model.smoothness();
    if (!(tc.k_abs > 0.0)) {
        throw ConfigError("config key theorem.k_abs: must be > 0");
    }
    if (!(tc.delta > 0.0 && tc.delta < 1.0)) {
        throw ConfigError("config key theorem.delta: must lie in (0, 1)");
    }

    ExperimentSetup s{cfg, std::move(sc), model, pilots, opt, 0.0, tc, 0, 50, 20'000, McConfig{}};
    s.ridge_eps = cfg.get_double("model.ridge_eps", 0.0);
    if (!(s.ridge_eps >= 0.0)) {
        throw ConfigError("config key model.ridge_eps: must be >= 0");
    }
    const long long seed = cfg.get_int("harness.seed", 1);
    if (seed < 0) {
        throw ConfigError("config key harness.seed: must be >= 0");
    }
    s.seed = static_cast<std::uint64_t>(seed);
    s.replications = static_cast<int>(cfg.get_int("harness.replications", 50));
    if (s.replications < 1) {
        throw ConfigError("config key harness.replications: must be >= 1");
    }
    s.error_draws = cfg.get_int("pilot.error_draws", 20'000);
    if (s.error_draws < 0) {
        throw ConfigError("config key pilot.error_draws: must be >= 0");
    }
    s.excess_mc.draws = cfg.get_int("harness.excess_draws", 100'000);
    s.excess_mc.seed = derive_seed(s.seed, "harness.excess");
    if (s.excess_mc.draws < 1) {
        throw ConfigError("config key harness.excess_draws: must be >= 1");
    }
    return s;
}

Vector fit_dr(const PairedSample& sample, const Pilots& pilots, const ExperimentSetup& setup)
{
    const DrProblem p = make_dr_problem(sample, pilots.rho, pilots.f0, setup.model);
    if (setup.model.link() == Link::identity) {
        return solve_linear_dr(p, setup.ridge_eps);
    }
    return minimize_dr(p, Vector::Zero(setup.model.dim_theta()), setup.opt).theta;
}

Vector fit_iw(const PairedSample& sample, const RatioEstimate& rho, const ExperimentSetup& setup)
{
    return fit_weighted_least_squares(setup.model, sample.source_x, sample.source_y, rho.evaluate(sample.source_x),
                                      setup.ridge_eps, setup.opt);
}

Vector fit_erm(const PairedSample& sample, const ExperimentSetup& setup)
{
    return fit_weighted_least_squares(setup.model, sample.source_x, sample.source_y,
                                      Vector::Ones(sample.n_source()), setup.ridge_eps, setup.opt);
}

double excess_of(const ExperimentSetup& setup, const Vector& theta)
{
    return excess_q_risk(setup.scenario, make_model_predictor(setup.model, theta), setup.excess_mc).value;
}

std::pair<PairedSample, PairedSample> split_halves(const PairedSample& sample, std::uint64_t seed)
{
    if (sample.n_source() < 2 || sample.n_target() < 2) {
        throw ConfigError("cross-fitting needs n_P >= 2 and n_Q >= 2");
    }
    auto permutation = [seed](Eigen::Index n, std::string_view purpose) {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        Rng rng = make_rng(seed, purpose);
        std::shuffle(idx.begin(), idx.end(), rng);
        return idx;
    };
    const auto ps = permutation(sample.n_source(), "crossfit.source");
    const auto pt = permutation(sample.n_target(), "crossfit.target");
    const Eigen::Index hs = sample.n_source() / 2;
    const Eigen::Index ht = sample.n_target() / 2;

    auto take = [&](Eigen::Index s_lo, Eigen::Index s_hi, Eigen::Index t_lo, Eigen::Index t_hi) {
        PairedSample out;
        out.source_x.resize(s_hi - s_lo, sample.dim());
        out.source_y.resize(s_hi - s_lo);
        out.target_x.resize(t_hi - t_lo, sample.dim());
        for (Eigen::Index i = s_lo; i < s_hi; ++i) {
            const auto k = ps[static_cast<std::size_t>(i)];
            out.source_x.row(i - s_lo) = sample.source_x.row(k);
            out.source_y[i - s_lo] = sample.source_y[k];
        }
        for (Eigen::Index i = t_lo; i < t_hi; ++i) {
            out.target_x.row(i - t_lo) = sample.target_x.row(pt[static_cast<std::size_t>(i)]);
        }
        out.provenance = sample.provenance;
        return out;
    };
    return {take(0, hs, 0, ht), take(hs, sample.n_source(), ht, sample.n_target())};
}

CrossFitResult run_crossfit_dr(const PairedSample& sample, const ExperimentSetup& setup, std::uint64_t seed)
{
    auto [d1, d2] = split_halves(sample, seed);
    const Pilots pilots = fit_pilots(d1, setup.scenario, setup.pilots, derive_seed(seed, "crossfit.pilots"));
    const Vector theta = fit_dr(d2, pilots, setup);
    CrossFitReport rep;
    rep.n1_source = d1.n_source();
    rep.n1_target = d1.n_target();
    rep.n2_source = d2.n_source();
    rep.n2_target = d2.n_target();
    rep.err_rho = measured_error(pilots.rho, setup, derive_seed(seed, "crossfit.err_rho"));
    rep.err_f = measured_error(pilots.f0, setup, derive_seed(seed, "crossfit.err_f"));
    return {theta, make_model_predictor(setup.model, theta, "DR-crossfit"), rep};
}

Stats summarize(std::vector<double> values)
{
    Stats s;
    s.count = static_cast<long long>(values.size());
    if (values.empty()) {
        s.median = s.q1 = s.q3 = s.iqr = s.mean = kNaN;
        return s;
    }
    std::sort(values.begin(), values.end());
    auto quantile = [&](double p) {
        const double pos = p * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    s.median = quantile(0.5);
    s.q1 = quantile(0.25);
    s.q3 = quantile(0.75);
    s.iqr = s.q3 - s.q1;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    return s;
}

SlopeFit estimate_slope(const std::vector<std::pair<double, double>>& points)
{
    if (points.size() < 2) {
        throw ConfigError("grid too short for slope");
    }
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [x, y] : points) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(points.size());
    my /= static_cast<double>(points.size());
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& [x, y] : points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if (!(sxx > 0.0)) {
        throw ConfigError("slope needs at least two distinct x values");
    }
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

void write_artifacts(const RunArtifacts& run, const std::filesystem::path& dir, bool force)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
    if (fs::exists(dir / "summary.json") && !force) {
        throw ConfigError("output directory " + dir.string() + " already holds summary.json; pass --force to overwrite");
    }
    auto open = [&](const std::string& name) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw NumericalError("cannot write " + (dir / name).string());
        }
        return out;
    };

    std::ofstream results = open("results.jsonl");
    std::ofstream timing = open("timing.jsonl");
    for (const auto& r : run.records) {
        json j{{"study", r.study},          {"scenario", run.scenario_hash}, {"cell", r.cell},
               {"rep", r.rep},              {"n_source", r.n_source},        {"n_target", r.n_target},
               {"estimator", r.estimator},  {"excess", maybe_number(r.excess)},
               {"err_rho", maybe_number(r.err_rho)}, {"err_f", maybe_number(r.err_f)}};
        if (r.eps_rho) j["eps_rho"] = *r.eps_rho;
        if (r.eps_f) j["eps_f"] = *r.eps_f;
        if (r.bound) j["bound"] = *r.bound;
        results << j.dump() << '\n';
        json t{{"cell", r.cell}, {"rep", r.rep}, {"estimator", r.estimator}, {"wall_seconds", r.wall_seconds}};
        timing << t.dump() << '\n';
    }
    for (const auto& line : run.raw_results) {
        results << line << '\n';
    }
    open("summary.json") << run.summary_json << '\n';
    std::ofstream plot = open("plot.csv");
    plot << "series,x,y\n";
    for (const auto& p : run.plot) {
        plot << p.series << ',' << format_double(p.x) << ',' << format_double(p.y) << '\n';
    }
    open("config.txt") << run.config_echo;
}

double linear_class_rademacher_bound(double theta_radius, double feature_cap, double n)
{
    return (theta_radius * feature_cap + 1.0) / std::sqrt(n);
}

RunArtifacts make_artifacts(const std::string& study, const ExperimentSetup& s)
{
    RunArtifacts a;
    a.study = study;
    a.scenario_hash = s.scenario.hash();
    Config echo = s.cfg;
    echo.set("harness.seed", std::to_string(s.seed));
    a.config_echo = echo.emit();
    return a;
}

RateStudyResult run_rate_study(const Config& cfg)
{
    const ExperimentSetup s = make_setup(cfg);
    RateStudyResult res;
    res.grid = int_list(cfg, "harness.n_grid", {250, 500, 1000, 2000});
    if (res.grid.size() < 2) {
        throw ConfigError("config key harness.n_grid: grid too short for slope");
    }
    const bool cross_fit = cfg.get_bool("harness.cross_fit", true);
    const auto cells = static_cast<long long>(res.grid.size());
    const long long reps = s.replications;

    std::vector<ReplicationRecord> slots(static_cast<std::size_t>(cells * reps));
    const auto errors = run_tasks(cells * reps, [&](long long t) {
        const auto start = std::chrono::steady_clock::now();
        const long long c = t / reps;
        const long long r = t % reps;
        const long long n = res.grid[static_cast<std::size_t>(c)];
        const auto cu = static_cast<std::uint64_t>(c);
        const auto ru = static_cast<std::uint64_t>(r);
        const PairedSample sample = sample_dataset(s.scenario, n, n, derive_seed(s.seed, "rate.sample", cu, ru));
        ReplicationRecord rec;
        rec.study = "rate-study";
        rec.cell = c;
        rec.rep = r;
        rec.estimator = cross_fit ? "DR-crossfit" : "DR";
        if (cross_fit) {
            const CrossFitResult cf = run_crossfit_dr(sample, s, derive_seed(s.seed, "rate.split", cu, ru));
            rec.excess = excess_of(s, cf.theta);
            rec.err_rho = cf.report.err_rho;
            rec.err_f = cf.report.err_f;
            rec.n_source = cf.report.n2_source;
            rec.n_target = cf.report.n2_target;
        } else {
            const auto ps = derive_seed(s.seed, "rate.pilot", cu, ru);
            const Pilots pilots = fit_pilots(sample, s.scenario, s.pilots, ps);
            rec.excess = excess_of(s, fit_dr(sample, pilots, s));
            rec.err_rho = measured_error(pilots.rho, s, derive_seed(ps, "err_rho"));
            rec.err_f = measured_error(pilots.f0, s, derive_seed(ps, "err_f"));
            rec.n_source = sample.n_source();
            rec.n_target = sample.n_target();
        }
        rec.wall_seconds = seconds_since(start);
        slots[static_cast<std::size_t>(t)] = std::move(rec);
    });
    res.failed_replications = check_failures(errors, cells, reps);

    res.artifacts = make_artifacts("rate-study", s);
    res.excess.resize(static_cast<std::size_t>(cells));
    for (long long t = 0; t < cells * reps; ++t) {
        if (!errors[static_cast<std::size_t>(t)]) {
            const auto& rec = slots[static_cast<std::size_t>(t)];
            res.excess[static_cast<std::size_t>(rec.cell)].push_back(rec.excess);
            res.artifacts.records.push_back(rec);
        }
    }
    std::vector<std::pair<double, double>> pts;
    json cells_json = json::array();
    for (long long c = 0; c < cells; ++c) {
        const Stats st = summarize(res.excess[static_cast<std::size_t>(c)]);
        res.stats.push_back(st);
        const double n = static_cast<double>(res.grid[static_cast<std::size_t>(c)]);
        if (st.median > 0.0) {
            pts.emplace_back(std::log(n), std::log(st.median));
        } else {
            ++res.zero_median_cells;
        }
        json cj = stats_json(st);
        cj["n"] = res.grid[static_cast<std::size_t>(c)];
        cells_json.push_back(cj);
        res.artifacts.plot.push_back({"median_excess", n, st.median});
    }
    if (pts.size() < 2) {
        throw ConfigError("grid too short for slope after excluding zero-median cells");
    }
    res.fit = estimate_slope(pts);
    for (long long c = 0; c < cells; ++c) {
        const double n = static_cast<double>(res.grid[static_cast<std::size_t>(c)]);
        res.artifacts.plot.push_back({"fitted_line", n, std::exp(res.fit.intercept) * std::pow(n, res.fit.slope)});
    }
    json summary{{"study", "rate-study"},
                 {"scenario", res.artifacts.scenario_hash},
                 {"replications", reps},
                 {"cross_fit", cross_fit},
                 {"cells", cells_json},
                 {"slope", res.fit.slope},
                 {"intercept", res.fit.intercept},
                 {"zero_median_cells", res.zero_median_cells},
                 {"failed_replications", res.failed_replications}};
    res.artifacts.summary_json = summary.dump(2);
    return res;
}

DRSweepResult run_double_robustness_sweep(const Config& cfg)
{
    Config c = cfg;
    if (c.subtree("scenario").entries().empty()) {
        c.set("scenario.preset", "misspecified");
    }
    const ExperimentSetup s = make_setup(c);
    DRSweepResult res;
    res.n = c.get_int("harness.n", 2000);
    res.rho_grid = c.get_doubles("harness.eps_ratio", {0.0, 0.2, 0.4, 0.5});
    res.f_grid = c.get_doubles("harness.eps_reg", {0.0, 0.2, 0.4, 0.5});
    const bool calibrate = c.get_bool("harness.calibrate_errors", true);
    if (res.n < 2) {
        throw ConfigError("config key harness.n: must be >= 2");
    }
    for (const auto* grid : {&res.rho_grid, &res.f_grid}) {
        if (grid->empty() || (*grid)[0] != 0.0) {
            throw ConfigError("config keys harness.eps_ratio and harness.eps_reg must start with 0");
        }
        for (double v : *grid) {
            if (!(v >= 0.0)) {
                throw ConfigError("config keys harness.eps_ratio and harness.eps_reg must be >= 0");
            }
        }
    }
    if (s.error_draws < 1) {
        throw ConfigError("config key pilot.error_draws: the sweep needs >= 1 draw");
    }
    const Direction dir_rho = parse_direction(c.get_string("pilot.corrupt.direction_ratio", "constant"), s.scenario.dim());
    const Direction dir_f = parse_direction(c.get_string("pilot.corrupt.direction_reg", "constant"), s.scenario.dim());
    const RatioEstimate base_rho = oracle_ratio(s.scenario, s.pilots.c_dr);
    const RegressionEstimate base_f = oracle_regression(s.scenario, s.pilots.c_rf);
    const std::uint64_t err_seed = derive_seed(s.seed, "sweep.error");

    std::vector<double> eps_rho(res.rho_grid.size());
    std::vector<double> eps_f(res.f_grid.size());
    std::vector<RatioEstimate> rhos;
    std::vector<RegressionEstimate> fs;
    std::vector<double> err_rho;
    std::vector<double> err_f;
    for (std::size_t i = 0; i < res.rho_grid.size(); ++i) {
        eps_rho[i] = calibrate ? calibrate_corruption(base_rho, res.rho_grid[i], dir_rho, s.scenario, s.error_draws, err_seed)
                               : res.rho_grid[i];
        rhos.push_back(corrupt_pilot(base_rho, eps_rho[i], dir_rho, s.scenario));
        err_rho.push_back(pilot_l2_error(rhos.back(), s.scenario, s.error_draws, err_seed));
    }
    for (std::size_t i = 0; i < res.f_grid.size(); ++i) {
        eps_f[i] = calibrate ? calibrate_corruption(base_f, res.f_grid[i], dir_f, s.scenario, s.error_draws, err_seed)
                             : res.f_grid[i];
        fs.push_back(corrupt_pilot(base_f, eps_f[i], dir_f, s.scenario));
        err_f.push_back(pilot_l2_error(fs.back(), s.scenario, s.error_draws, err_seed));
    }

    const auto n_cells = static_cast<long long>(res.rho_grid.size() * res.f_grid.size());
    const long long reps = s.replications;
    struct Slot {
        double dr = 0.0;
        double iw = 0.0;
        double wall_dr = 0.0;
        double wall_iw = 0.0;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(n_cells * reps));
    const auto errors = run_tasks(n_cells * reps, [&](long long t) {
        const long long cell = t / reps;
        const long long r = t % reps;
        const auto i_rho = static_cast<std::size_t>(cell) / res.f_grid.size();
        const auto i_f = static_cast<std::size_t>(cell) % res.f_grid.size();
        // Common random numbers: every cell sees the same sample in replication r.
        const PairedSample sample =
            sample_dataset(s.scenario, res.n, res.n, derive_seed(s.seed, "sweep.sample", static_cast<std::uint64_t>(r)));
        Slot& slot = slots[static_cast<std::size_t>(t)];
        auto start = std::chrono::steady_clock::now();
        slot.dr = excess_of(s, fit_dr(sample, Pilots{rhos[i_rho], fs[i_f]}, s));
        slot.wall_dr = seconds_since(start);
        start = std::chrono::steady_clock::now();
        slot.iw = excess_of(s, fit_iw(sample, rhos[i_rho], s));
        slot.wall_iw = seconds_since(start);
    });
    check_failures(errors, n_cells, reps);

    res.artifacts = make_artifacts("dr-sweep", s);
    json cells_json = json::array();
    for (long long cell = 0; cell < n_cells; ++cell) {
        const auto i_rho = static_cast<std::size_t>(cell) / res.f_grid.size();
        const auto i_f = static_cast<std::size_t>(cell) % res.f_grid.size();
        SweepCell sc;
        sc.target_rho = res.rho_grid[i_rho];
        sc.target_f = res.f_grid[i_f];
        sc.eps_rho = eps_rho[i_rho];
        sc.eps_f = eps_f[i_f];
        sc.err_rho = err_rho[i_rho];
        sc.err_f = err_f[i_f];
        for (long long r = 0; r < reps; ++r) {
            const auto t = static_cast<std::size_t>(cell * reps + r);
            if (errors[t]) {
                continue;
            }
            sc.dr.push_back(slots[t].dr);
            sc.iw.push_back(slots[t].iw);
            for (int k = 0; k < 2; ++k) {
                ReplicationRecord rec;
                rec.study = "dr-sweep";
                rec.cell = cell;
                rec.rep = r;
                rec.n_source = res.n;
                rec.n_target = res.n;
                rec.estimator = k == 0 ? "DR" : "IW";
                rec.excess = k == 0 ? slots[t].dr : slots[t].iw;
                rec.err_rho = sc.err_rho;
                rec.err_f = sc.err_f;
                rec.eps_rho = sc.eps_rho;
                rec.eps_f = sc.eps_f;
                rec.wall_seconds = k == 0 ? slots[t].wall_dr : slots[t].wall_iw;
                res.artifacts.records.push_back(std::move(rec));
            }
        }
        sc.dr_stats = summarize(sc.dr);
        sc.iw_stats = summarize(sc.iw);
        res.cells.push_back(std::move(sc));
    }
    const SweepCell& base = res.cells.front();
    const double base_dr = base.dr_stats.median;
    const double base_iw = base.iw_stats.median;
    for (auto& sc : res.cells) {
        sc.dr_bias = sc.dr_stats.median - base_dr;
        sc.iw_bias = sc.iw_stats.median - base_iw;
        cells_json.push_back({{"target_rho", sc.target_rho},
                              {"target_f", sc.target_f},
                              {"eps_rho", sc.eps_rho},
                              {"eps_f", sc.eps_f},
                              {"err_rho", sc.err_rho},
                              {"err_f", sc.err_f},
                              {"dr", stats_json(sc.dr_stats)},
                              {"iw", stats_json(sc.iw_stats)},
                              {"dr_bias", sc.dr_bias},
                              {"iw_bias", sc.iw_bias}});
        res.artifacts.plot.push_back({"dr_median_f" + format_double(sc.target_f), sc.err_rho, sc.dr_stats.median});
        res.artifacts.plot.push_back({"iw_median_f" + format_double(sc.target_f), sc.err_rho, sc.iw_stats.median});
    }
    json summary{{"study", "dr-sweep"},
                 {"scenario", res.artifacts.scenario_hash},
                 {"n", res.n},
                 {"replications", reps},
                 {"calibrated", calibrate},
                 {"cells", cells_json}};
    res.artifacts.summary_json = summary.dump(2);
    return res;
}

CompareResult compare_estimators(const Config& cfg)
{
    const ExperimentSetup s = make_setup(cfg);
    CompareResult res;
    const std::vector<std::string> wanted = cfg.get_strings("harness.estimators", estimator_names());
    if (wanted.empty()) {
        throw ConfigError("config key harness.estimators: empty estimator list");
    }
    std::string valid;
    for (const auto& n : estimator_names()) {
        valid += (valid.empty() ? "" : ", ") + n;
    }
    for (const auto& w : wanted) {
        if (std::find(estimator_names().begin(), estimator_names().end(), w) == estimator_names().end()) {
            throw ConfigError("config key harness.estimators: unknown estimator '" + w + "' (valid: " + valid + ")");
        }
    }
    res.n = cfg.get_int("harness.n", 2000);
    if (res.n < 2) {
        throw ConfigError("config key harness.n: must be >= 2");
    }
    const long long reps = s.replications;
    const auto k = static_cast<long long>(wanted.size());
    std::vector<ReplicationRecord> slots(static_cast<std::size_t>(reps * k));
    const auto errors = run_tasks(reps, [&](long long r) {
        const auto ru = static_cast<std::uint64_t>(r);
        const PairedSample sample = sample_dataset(s.scenario, res.n, res.n, derive_seed(s.seed, "compare.sample", ru));
        std::optional<Pilots> estimated;
        const Pilots oracle{oracle_ratio(s.scenario, s.pilots.c_dr), oracle_regression(s.scenario, s.pilots.c_rf)};
        auto get_estimated = [&]() -> const Pilots& {
            if (!estimated) {
                estimated = fit_pilots(sample, s.scenario, s.pilots, derive_seed(s.seed, "compare.pilots", ru));
            }
            return *estimated;
        };
        for (long long e = 0; e < k; ++e) {
            const auto start = std::chrono::steady_clock::now();
            const std::string& name = wanted[static_cast<std::size_t>(e)];
            ReplicationRecord rec;
            rec.study = "compare";
            rec.cell = e;
            rec.rep = r;
            rec.estimator = name;
            rec.n_source = sample.n_source();
            rec.n_target = sample.n_target();
            rec.err_rho = kNaN;
            rec.err_f = kNaN;
            Vector theta;
            if (name == "ERM-source") {
                theta = fit_erm(sample, s);
            } else if (name == "IW-oracle") {
                theta = fit_iw(sample, oracle.rho, s);
                rec.err_rho = 0.0;
            } else if (name == "IW-estimated") {
                theta = fit_iw(sample, get_estimated().rho, s);
                rec.err_rho = measured_error(get_estimated().rho, s, derive_seed(s.seed, "compare.err_rho", ru));
            } else if (name == "DR-oracle") {
                theta = fit_dr(sample, oracle, s);
                rec.err_rho = 0.0;
                rec.err_f = 0.0;
            } else if (name == "DR-estimated") {
                theta = fit_dr(sample, get_estimated(), s);
                rec.err_rho = measured_error(get_estimated().rho, s, derive_seed(s.seed, "compare.err_rho", ru));
                rec.err_f = measured_error(get_estimated().f0, s, derive_seed(s.seed, "compare.err_f", ru));
            } else {
                const CrossFitResult cf = run_crossfit_dr(sample, s, derive_seed(s.seed, "compare.split", ru));
                theta = cf.theta;
                rec.err_rho = cf.report.err_rho;
                rec.err_f = cf.report.err_f;
            }
            rec.excess = excess_of(s, theta);
            rec.wall_seconds = seconds_since(start);
            slots[static_cast<std::size_t>(r * k + e)] = std::move(rec);
        }
    });
    int failed = 0;
    for (const auto& e : errors) {
        failed += e ? 1 : 0;
    }
    if (failed == reps) {
        std::rethrow_exception(errors.front());
    }

    res.artifacts = make_artifacts("compare", s);
    res.rows.resize(static_cast<std::size_t>(k));
    for (long long r = 0; r < reps; ++r) {
        if (errors[static_cast<std::size_t>(r)]) {
            continue;
        }
        for (long long e = 0; e < k; ++e) {
            const auto& rec = slots[static_cast<std::size_t>(r * k + e)];
            res.rows[static_cast<std::size_t>(e)].excess.push_back(rec.excess);
            res.artifacts.records.push_back(rec);
        }
    }
    json rows = json::array();
    for (long long e = 0; e < k; ++e) {
        auto& row = res.rows[static_cast<std::size_t>(e)];
        row.estimator = wanted[static_cast<std::size_t>(e)];
        row.stats = summarize(row.excess);
        json rj = stats_json(row.stats);
        rj["estimator"] = row.estimator;
        rows.push_back(rj);
        res.artifacts.plot.push_back({row.estimator, static_cast<double>(res.n), row.stats.median});
    }
    json summary{{"study", "compare"},
                 {"scenario", res.artifacts.scenario_hash},
                 {"n", res.n},
                 {"replications", reps},
                 {"failed_replications", failed},
                 {"rows", rows}};
    res.artifacts.summary_json = summary.dump(2);
    return res;
}

DominanceResult run_dominance_check(const Config& cfg)
{
    const ExperimentSetup s = make_setup(cfg);
    DominanceResult res;
    res.n = cfg.get_int("harness.n", 1000);
    if (res.n < 2) {
        throw ConfigError("config key harness.n: must be >= 2");
    }
    if (s.error_draws < 1) {
        throw ConfigError("config key pilot.error_draws: the dominance check needs measured pilot errors");
    }
    const double cap = s.model.feature_cap();
    const double theta_radius = cfg.get_double("theorem.theta_radius", 1.0 / cap);
    const long long reps = s.replications;
    struct Slot {
        double excess = 0.0;
        double bound = 0.0;
        CrossFitReport report;
        double wall = 0.0;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(reps));
    const auto errors = run_tasks(reps, [&](long long r) {
        const auto start = std::chrono::steady_clock::now();
        const auto ru = static_cast<std::uint64_t>(r);
        const PairedSample sample = sample_dataset(s.scenario, res.n, res.n, derive_seed(s.seed, "dominance.sample", ru));
        const CrossFitResult cf = run_crossfit_dr(sample, s, derive_seed(s.seed, "dominance.split", ru));
        Slot& slot = slots[static_cast<std::size_t>(r)];
        slot.excess = excess_of(s, cf.theta);
        AgnosticInputs in;
        in.err_rho = cf.report.err_rho;
        in.err_f = cf.report.err_f;
        in.c_dr = s.pilots.c_dr;
        in.c_rf = s.pilots.c_rf;
        in.n_p = static_cast<double>(cf.report.n2_source);
        in.n_q = static_cast<double>(cf.report.n2_target);
        in.rad_p = linear_class_rademacher_bound(theta_radius, cap, in.n_p);
        in.rad_q = linear_class_rademacher_bound(theta_radius, cap, in.n_q);
        in.delta = s.theorem.delta;
        slot.bound = structure_agnostic_bound(in);
        slot.report = cf.report;
        slot.wall = seconds_since(start);
    });
    check_failures(errors, 1, reps);

    res.artifacts = make_artifacts("dominance", s);
    long long covered = 0;
    for (long long r = 0; r < reps; ++r) {
        if (errors[static_cast<std::size_t>(r)]) {
            continue;
        }
        const Slot& slot = slots[static_cast<std::size_t>(r)];
        res.excess.push_back(slot.excess);
        res.bound.push_back(slot.bound);
        covered += slot.excess <= slot.bound ? 1 : 0;
        ReplicationRecord rec;
        rec.study = "dominance";
        rec.rep = r;
        rec.n_source = slot.report.n2_source;
        rec.n_target = slot.report.n2_target;
        rec.estimator = "DR-crossfit";
        rec.excess = slot.excess;
        rec.err_rho = slot.report.err_rho;
        rec.err_f = slot.report.err_f;
        rec.bound = slot.bound;
        rec.wall_seconds = slot.wall;
        res.artifacts.records.push_back(std::move(rec));
    }
    res.covered_fraction = static_cast<double>(covered) / static_cast<double>(res.excess.size());
    json summary{{"study", "dominance"},
                 {"scenario", res.artifacts.scenario_hash},
                 {"n", res.n},
                 {"replications", reps},
                 {"delta", s.theorem.delta},
                 {"theta_radius", theta_radius},
                 {"covered_fraction", res.covered_fraction},
                 {"excess", stats_json(summarize(res.excess))},
                 {"bound", stats_json(summarize(res.bound))}};
    res.artifacts.summary_json = summary.dump(2);
    res.artifacts.plot.push_back({"covered_fraction", static_cast<double>(res.n), res.covered_fraction});
    return res;
}

} // namespace drshift
