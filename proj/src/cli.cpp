#include "drshift/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"

#include "drshift/complexity.hpp"
#include "drshift/errors.hpp"
#include "drshift/harness.hpp"
#include "drshift/linalg.hpp"

namespace drshift {

using nlohmann::json;

namespace {

struct RunOptions {
    std::string config;
    std::string out;
    std::optional<long long> seed;
    bool force = false;
    int verbose = 0;
};

std::string sig9(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void add_run_options(CLI::App* app, RunOptions& o)
{
    app->add_option("--config", o.config, "flat key = value config file");
    app->add_option("--out", o.out, "output directory");
    app->add_option("--seed", o.seed, "override harness.seed");
    app->add_flag("--force", o.force, "overwrite an existing summary");
    app->add_flag("-v,--verbose", o.verbose, "log progress to standard error");
}

Config load_config(const RunOptions& o)
{
    Config cfg = o.config.empty() ? Config{} : Config::load(o.config);
    if (o.seed) {
        if (*o.seed < 0) {
            throw ConfigError("--seed must be >= 0");
        }
        cfg.set("harness.seed", std::to_string(*o.seed));
    }
    return cfg;
}

std::filesystem::path output_dir(const RunOptions& o)
{
    if (!o.out.empty()) {
        return o.out;
    }
    if (const char* env = std::getenv("DRSHIFT_OUT")) {
        return env;
    }
    return "drshift-out";
}

void print_terms(std::ostream& out, const std::string& name, const BoundTerms& t)
{
    out << name << " = " << sig9(t.total()) << '\n';
    for (const auto& [label, value] : t.terms) {
        out << "  " << label << ": " << sig9(value) << '\n';
    }
}

/// A d x d matrix from d*d row-major entries, d diagonal entries or a single scalar (d = 1).
Matrix matrix_from_list(const std::vector<double>& v, int d, const std::string& flag)
{
    const auto n = static_cast<std::size_t>(d);
    if (v.size() == n * n) {
        Matrix m(d, d);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                m(i, j) = v[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)];
            }
        }
        return m;
    }
    if (v.size() == n) {
        return Eigen::Map<const Vector>(v.data(), d).asDiagonal();
    }
    throw ConfigError(flag + " needs " + std::to_string(d) + " diagonal or " + std::to_string(d * d) +
                      " row-major entries");
}

struct FisherFlags {
    std::vector<double> ip;
    std::vector<double> iq;
    int d = 0;
    std::string config;
};

FisherPair fisher_from(const FisherFlags& f)
{
    if (!f.config.empty()) {
        const ExperimentSetup s = make_setup(Config::load(f.config));
        const ParametricModel m(s.scenario.link(), s.model.features(), s.scenario.dim(), s.scenario.trunc_radius());
        return oracle_fisher(s.scenario, m);
    }
    if (f.ip.empty() || f.iq.empty()) {
        throw ConfigError("--ip and --iq (or --config) are required");
    }
    int d = f.d;
    if (d <= 0) {
        d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(f.iq.size()))));
        if (static_cast<std::size_t>(d * d) != f.iq.size()) {
            d = static_cast<int>(f.iq.size());
        }
    }
    FisherPair fp;
    fp.i_p = matrix_from_list(f.ip, d, "--ip");
    fp.i_q = matrix_from_list(f.iq, d, "--iq");
    if (!fp.i_p.isApprox(fp.i_p.transpose(), 1e-10) || !fp.i_q.isApprox(fp.i_q.transpose(), 1e-10)) {
        throw ConfigError("--ip and --iq must be symmetric");
    }
    require_positive_definite(fp.i_q, "target Fisher singular");
    return fp;
}

PairedSample load_or_generate(const ExperimentSetup& s, const Config& cfg)
{
    if (cfg.has("data.source")) {
        CsvSchema schema;
        schema.dim = static_cast<int>(cfg.get_int("data.dim", s.scenario.dim()));
        schema.header = cfg.get_bool("data.header", false);
        schema.rescale_labels = cfg.get_bool("data.rescale_labels", false);
        return load_csv(cfg.get_string("data.source"), cfg.get_string("data.target"), schema);
    }
    const long long n = cfg.get_int("harness.n", 1000);
    const long long n_p = cfg.get_int("harness.n_source", n);
    const long long n_q = cfg.get_int("harness.n_target", n);
    if (n_p < 1 || n_q < 1) {
        throw ConfigError("config keys harness.n_source and harness.n_target must be >= 1");
    }
    return sample_dataset(s.scenario, n_p, n_q, derive_seed(s.seed, "cli.sample"));
}

std::string theta_text(const Vector& theta)
{
    std::string t;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        t += (i ? " " : "") + sig9(theta[i]);
    }
    return t;
}

int cmd_generate(const RunOptions& o, std::ostream& out)
{
    const Config cfg = load_config(o);
    const ExperimentSetup s = make_setup(cfg);
    const PairedSample sample = load_or_generate(s, cfg);
    const auto dir = output_dir(o);
    RunArtifacts run = make_artifacts("generate", s);
    run.summary_json = json{{"study", "generate"},
                            {"scenario", run.scenario_hash},
                            {"n_source", sample.n_source()},
                            {"n_target", sample.n_target()}}
                           .dump(2);
    write_artifacts(run, dir, o.force);
    write_csv(sample, dir / "source.csv", dir / "target.csv");
    out << "wrote " << sample.n_source() << " source and " << sample.n_target() << " target rows to "
        << dir.string() << '\n';
    return 0;
}

int cmd_fit(const RunOptions& o, std::ostream& out, bool force_crossfit)
{
    const Config cfg = load_config(o);
    const ExperimentSetup s = make_setup(cfg);
    const PairedSample sample = load_or_generate(s, cfg);
    const bool synthetic = sample.provenance.kind == Provenance::Kind::synthetic;
    const bool cross = force_crossfit || cfg.get_bool("harness.cross_fit", false);
    const std::string study = force_crossfit ? "crossfit" : "fit";

    Vector theta;
    json report;
    ReplicationRecord rec;
    rec.study = study;
    rec.estimator = cross ? "DR-crossfit" : "DR";
    if (cross) {
        const CrossFitResult cf = run_crossfit_dr(sample, s, derive_seed(s.seed, "cli.split"));
        theta = cf.theta;
        rec.n_source = cf.report.n2_source;
        rec.n_target = cf.report.n2_target;
        rec.err_rho = synthetic ? cf.report.err_rho : NAN;
        rec.err_f = synthetic ? cf.report.err_f : NAN;
        report = {{"d1_source", cf.report.n1_source},
                  {"d1_target", cf.report.n1_target},
                  {"d2_source", cf.report.n2_source},
                  {"d2_target", cf.report.n2_target}};
    } else {
        const Pilots p = fit_pilots(sample, s.scenario, s.pilots, derive_seed(s.seed, "cli.pilots"));
        theta = fit_dr(sample, p, s);
        rec.n_source = sample.n_source();
        rec.n_target = sample.n_target();
        rec.err_rho = synthetic && s.error_draws > 0
                          ? pilot_l2_error(p.rho, s.scenario, s.error_draws, derive_seed(s.seed, "cli.err_rho"))
                          : NAN;
        rec.err_f = synthetic && s.error_draws > 0
                        ? pilot_l2_error(p.f0, s.scenario, s.error_draws, derive_seed(s.seed, "cli.err_f"))
                        : NAN;
        report["dr_risk"] = dr_empirical_risk(sample, p.rho, p.f0, make_model_predictor(s.model, theta));
    }
    rec.excess = synthetic ? excess_of(s, theta) : NAN;

    out << "theta_hat = " << theta_text(theta) << '\n';
    if (synthetic) {
        out << "excess_q_risk = " << sig9(rec.excess) << '\n';
        if (std::isfinite(rec.err_rho)) {
            out << "pilot_l2_error ratio = " << sig9(rec.err_rho) << " regression = " << sig9(rec.err_f) << '\n';
        }
    }
    for (auto it = report.begin(); it != report.end(); ++it) {
        out << it.key() << " = " << it.value().dump() << '\n';
    }

    RunArtifacts run = make_artifacts(study, s);
    run.records.push_back(rec);
    json summary{{"study", study}, {"scenario", run.scenario_hash}, {"theta_hat", std::vector<double>(theta.data(), theta.data() + theta.size())}, {"report", report}};
    if (synthetic) {
        summary["excess"] = rec.excess;
    }
    run.summary_json = summary.dump(2);
    write_artifacts(run, output_dir(o), o.force);
    return 0;
}

int cmd_rate(const RunOptions& o, std::ostream& out)
{
    const RateStudyResult r = run_rate_study(load_config(o));
    for (std::size_t c = 0; c < r.grid.size(); ++c) {
        out << "n = " << r.grid[c] << "  median excess = " << sig9(r.stats[c].median)
            << "  iqr = " << sig9(r.stats[c].iqr) << '\n';
    }
    out << "slope = " << sig9(r.fit.slope) << "  intercept = " << sig9(r.fit.intercept) << '\n';
    if (r.zero_median_cells > 0) {
        out << "warning: " << r.zero_median_cells << " zero-median cells excluded from the fit\n";
    }
    write_artifacts(r.artifacts, output_dir(o), o.force);
    return 0;
}

int cmd_sweep(const RunOptions& o, std::ostream& out)
{
    const DRSweepResult r = run_double_robustness_sweep(load_config(o));
    out << "err_rho err_f | DR median (iqr) bias | IW median (iqr) bias\n";
    for (const auto& c : r.cells) {
        out << sig9(c.err_rho) << ' ' << sig9(c.err_f) << " | " << sig9(c.dr_stats.median) << " ("
            << sig9(c.dr_stats.iqr) << ") " << sig9(c.dr_bias) << " | " << sig9(c.iw_stats.median) << " ("
            << sig9(c.iw_stats.iqr) << ") " << sig9(c.iw_bias) << '\n';
    }
    write_artifacts(r.artifacts, output_dir(o), o.force);
    return 0;
}

int cmd_compare(const RunOptions& o, std::ostream& out)
{
    const CompareResult r = compare_estimators(load_config(o));
    for (const auto& row : r.rows) {
        out << row.estimator << "  median = " << sig9(row.stats.median) << "  iqr = " << sig9(row.stats.iqr) << '\n';
    }
    write_artifacts(r.artifacts, output_dir(o), o.force);
    return 0;
}

int cmd_rad(const RunOptions& o, std::ostream& out)
{
    const Config cfg = load_config(o);
    const ExperimentSetup s = make_setup(cfg);
    FunctionClassSpec spec;
    const std::string kind = cfg.get_string("rad.class", "linear-ball");
    const long long n = cfg.get_int("rad.n", 100);
    double bound = NAN;
    spec.bound_b = cfg.get_double("rad.bound_b", 1.0);
    if (kind == "finite") {
        const long long size = cfg.get_int("rad.finite_size", 8);
        if (size < 1) {
            throw ConfigError("config key rad.finite_size: must be >= 1");
        }
        Rng rng = make_rng(s.seed, "rad.members");
        std::normal_distribution<double> normal;
        for (long long k = 0; k < size; ++k) {
            Vector u(s.scenario.dim());
            for (Eigen::Index i = 0; i < u.size(); ++i) {
                u[i] = normal(rng);
            }
            const double b = spec.bound_b;
            spec.members.push_back([u, b](const PointRef& x) { return u.dot(x) >= 0.0 ? b : -b; });
        }
        bound = finite_class_bound(spec.bound_b, size, static_cast<double>(n));
    } else if (kind == "linear-ball") {
        spec.kind = FunctionClassSpec::Kind::linear_ball;
        spec.features = s.model.features();
        spec.radius = cfg.get_double("rad.radius", 1.0 / s.model.feature_cap());
        bound = linear_class_rademacher_bound(spec.radius, s.model.feature_cap(), static_cast<double>(n));
    } else if (kind == "nn") {
        spec.kind = FunctionClassSpec::Kind::nn_frobenius;
        spec.depth = static_cast<int>(cfg.get_int("rad.depth", 1));
        for (double w : cfg.get_doubles("rad.widths", std::vector<double>(static_cast<std::size_t>(std::max(spec.depth - 1, 0)), 4.0))) {
            spec.widths.push_back(static_cast<int>(w));
        }
        spec.caps = cfg.get_doubles("rad.caps", std::vector<double>(static_cast<std::size_t>(std::max(spec.depth, 1)), 1.0));
        spec.lipschitz = cfg.get_double("rad.lipschitz", spec.lipschitz);
        spec.input_radius = s.scenario.trunc_radius();
        bound = nn_class_bound(spec.lipschitz, spec.input_radius, spec.depth, spec.caps, static_cast<double>(n));
    } else {
        throw ConfigError("config key rad.class: expected finite, linear-ball or nn");
    }
    if (cfg.get_bool("rad.shift", true)) {
        auto sc = std::make_shared<const ShiftScenario>(s.scenario);
        spec.offset = [sc](const PointRef& x) { return oracle_bayes(*sc, x); };
    }
    SignConfig signs;
    signs.n_signs = cfg.get_int("rad.n_signs", signs.n_signs);
    signs.exact_threshold = static_cast<int>(cfg.get_int("rad.exact_threshold", signs.exact_threshold));
    signs.nn_starts = static_cast<int>(cfg.get_int("rad.nn_starts", signs.nn_starts));
    signs.nn_steps = static_cast<int>(cfg.get_int("rad.nn_steps", signs.nn_steps));
    const std::string law = cfg.get_string("rad.law", "Q");
    if (law != "P" && law != "Q") {
        throw ConfigError("config key rad.law: expected P or Q");
    }
    const RadEstimate e = rademacher_under_law(spec, s.scenario, law == "P" ? Domain::source : Domain::target, n,
                                               cfg.get_int("rad.n_outer", 10), signs, derive_seed(s.seed, "cli.rad"));
    out << "rademacher = " << sig9(e.value) << "  std_error = " << sig9(e.std_error) << "  mode = "
        << to_string(e.mode) << '\n';
    out << "bound = " << sig9(bound) << '\n';

    RunArtifacts run = make_artifacts("rad", s);
    const json line{{"study", "rad"},         {"scenario", run.scenario_hash}, {"class", kind},
                    {"law", law},             {"n", n},                        {"value", e.value},
                    {"std_error", e.std_error}, {"mode", to_string(e.mode)},   {"bound", bound}};
    run.raw_results.push_back(line.dump());
    run.summary_json = line.dump(2);
    run.plot.push_back({"rademacher", static_cast<double>(n), e.value});
    run.plot.push_back({"bound", static_cast<double>(n), bound});
    write_artifacts(run, output_dir(o), o.force);
    return 0;
}

int cmd_dominance(const RunOptions& o, std::ostream& out)
{
    const DominanceResult r = run_dominance_check(load_config(o));
    out << "covered fraction = " << sig9(r.covered_fraction) << " over " << r.excess.size() << " replications\n";
    out << "median excess = " << sig9(summarize(r.excess).median) << "  median bound = " << sig9(summarize(r.bound).median)
        << '\n';
    write_artifacts(r.artifacts, output_dir(o), o.force);
    return 0;
}

} // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Doubly robust covariate shift adaptation experiments", "drshift"};
    app.require_subcommand(1);
    RunOptions opts;
    std::function<int()> action;

    const std::vector<std::pair<std::string, std::string>> run_commands{
        {"generate", "sample a synthetic dataset to CSV"},
        {"fit", "fit pilots and the DR estimator on one sample"},
        {"rate-study", "replicated excess risk over an n grid with a log-log slope"},
        {"dr-sweep", "corrupt each pilot in turn and compare DR with IW"},
        {"compare", "median excess risk of several estimators"},
        {"rad", "estimate a Rademacher complexity and its bound"},
        {"crossfit", "cross-fitted DR estimator on one sample"},
    };
    for (const auto& [name, help] : run_commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        add_run_options(sub, opts);
        const std::string cmd = name;
        sub->callback([&, cmd]() {
            action = [&, cmd]() {
                if (cmd == "generate") return cmd_generate(opts, out);
                if (cmd == "fit") return cmd_fit(opts, out, false);
                if (cmd == "crossfit") return cmd_fit(opts, out, true);
                if (cmd == "rate-study") return cmd_rate(opts, out);
                if (cmd == "dr-sweep") return cmd_sweep(opts, out);
                if (cmd == "compare") return cmd_compare(opts, out);
                return cmd_rad(opts, out);
            };
        });
    }

    CLI::App* bounds = app.add_subcommand("bounds", "evaluate a bound formula");
    bounds->require_subcommand(1);
    std::map<std::string, double> num;
    auto flag = [&](CLI::App* a, const std::string& name, bool required = true) {
        auto* opt = a->add_option("--" + name, num[name]);
        if (required) {
            opt->required();
        }
        return opt;
    };

    std::vector<double> caps;
    CLI::App* nn = bounds->add_subcommand("nn", "network class Rademacher bound");
    flag(nn, "L");
    flag(nn, "R");
    flag(nn, "depth");
    nn->add_option("--mf", caps, "Frobenius caps, one per layer")->required()->delimiter(',');
    flag(nn, "n");
    nn->callback([&]() {
        action = [&]() {
            print_terms(out, "nn_class_bound",
                        nn_class_bound_terms(num["L"], num["R"], static_cast<int>(num["depth"]), caps, num["n"]));
            return 0;
        };
    });

    CLI::App* fin = bounds->add_subcommand("finite", "finite class Rademacher bound");
    flag(fin, "B");
    flag(fin, "size");
    flag(fin, "n");
    fin->callback([&]() {
        action = [&]() {
            print_terms(out, "finite_class_bound",
                        finite_class_bound_terms(num["B"], static_cast<long long>(num["size"]), num["n"]));
            return 0;
        };
    });

    CLI::App* sa = bounds->add_subcommand("sa", "structure-agnostic excess risk bound");
    for (const char* name : {"err-rho", "err-f", "rad-p", "rad-q", "np", "nq"}) {
        flag(sa, name);
    }
    num["c-dr"] = kDefaultClipRatio;
    num["c-rf"] = kDefaultClipRegression;
    num["delta"] = 0.05;
    num["k"] = 1.0;
    flag(sa, "c-dr", false);
    flag(sa, "c-rf", false);
    flag(sa, "delta", false);
    sa->callback([&]() {
        action = [&]() {
            AgnosticInputs in{num["err-rho"], num["err-f"], num["c-dr"], num["c-rf"], num["rad-p"],
                              num["rad-q"],   num["np"],    num["nq"],   num["delta"]};
            print_terms(out, "structure_agnostic_bound", structure_agnostic_bound_terms(in));
            return 0;
        };
    });

    FisherFlags ff;
    auto fisher_flags = [&](CLI::App* a) {
        a->add_option("--ip", ff.ip, "source Fisher, diagonal or row-major")->delimiter(',');
        a->add_option("--iq", ff.iq, "target Fisher, diagonal or row-major")->delimiter(',');
        a->add_option("--dim", ff.d, "parameter dimension");
        a->add_option("--config", ff.config, "take both Fisher matrices from a scenario config");
        flag(a, "k", false);
        flag(a, "c-dr", false);
        flag(a, "c-rf", false);
        flag(a, "delta", false);
    };
    auto theorem = [&]() {
        TheoremConstants tc;
        tc.k_abs = num["k"];
        tc.c_dr = num["c-dr"];
        tc.c_rf = num["c-rf"];
        tc.delta = num["delta"];
        return tc;
    };

    CLI::App* par = bounds->add_subcommand("parametric", "parametric DR excess risk bound");
    fisher_flags(par);
    num["trace"] = NAN;
    flag(par, "trace", false);
    flag(par, "np");
    flag(par, "nq");
    par->callback([&]() {
        action = [&]() {
            FisherPair fp;
            if (std::isfinite(num["trace"])) {
                if (ff.d <= 0) {
                    throw ConfigError("--trace needs --dim");
                }
                fp.i_q = Matrix::Identity(ff.d, ff.d);
                fp.i_p = (num["trace"] / ff.d) * fp.i_q;
            } else {
                fp = fisher_from(ff);
            }
            const TheoremConstants tc = theorem();
            const int d = static_cast<int>(fp.i_q.rows());
            const double a = tc.k_abs * (1.0 + tc.c_dr) * (1.0 + tc.c_rf);
            const double lead = 18.0 * a * a * std::log(d / tc.delta);
            const double tr = fisher_mismatch_trace(fp);
            BoundTerms t{{{"source term", lead * tr / num["np"]}, {"target term", lead * d / num["nq"]}}};
            print_terms(out, "parametric_bound", t);
            out << "  fisher_mismatch_trace: " << sig9(tr) << '\n';
            return 0;
        };
    });

    CLI::App* rad = bounds->add_subcommand("radius", "confidence radius around theta*");
    fisher_flags(rad);
    flag(rad, "np");
    flag(rad, "nq");
    rad->callback([&]() {
        action = [&]() {
            out << "confidence_radius = "
                << sig9(confidence_radius(fisher_from(ff), theorem(), num["np"], num["nq"])) << '\n';
            return 0;
        };
    });

    CLI::App* thr = bounds->add_subcommand("thresholds", "sample size thresholds N1, N2, kappa");
    fisher_flags(thr);
    num["b1"] = 0.0;
    num["b2"] = 0.0;
    num["b3"] = 0.0;
    flag(thr, "b1", false);
    flag(thr, "b2", false);
    flag(thr, "b3", false);
    thr->callback([&]() {
        action = [&]() {
            const FisherPair fp = fisher_from(ff);
            TheoremConstants tc = theorem();
            tc.smooth = {num["b1"], num["b2"], num["b3"]};
            const int d = static_cast<int>(fp.i_q.rows());
            const Thresholds t = sample_size_thresholds(fp, tc, d);
            out << "N1 = " << sig9(t.n1) << "\nN2 = " << sig9(t.n2) << "\nN* = " << sig9(t.n_star)
                << "\nkappa = " << sig9(t.kappa) << "\nkappa_bar = " << sig9(t.kappa_bar)
                << "\nmin n required = " << sig9(t.kappa_bar * t.n_star * std::log(d / tc.delta)) << '\n';
            return 0;
        };
    });

    CLI::App* bc = bounds->add_subcommand("bconst", "constants B1, B2, B3");
    flag(bc, "b1");
    flag(bc, "b2");
    flag(bc, "b3");
    flag(bc, "c-dr", false);
    flag(bc, "c-rf", false);
    bc->callback([&]() {
        action = [&]() {
            const BConstants b = b_constants(num["b1"], num["b2"], num["b3"], num["c-dr"], num["c-rf"]);
            out << "B1 = " << sig9(b.b1) << "\nB2 = " << sig9(b.b2) << "\nB3 = " << sig9(b.b3) << '\n';
            return 0;
        };
    });

    CLI::App* dom = bounds->add_subcommand("dominance", "replicated check of the structure-agnostic bound");
    add_run_options(dom, opts);
    dom->callback([&]() { action = [&]() { return cmd_dominance(opts, out); }; });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return 1;
    }

    try {
        const int code = action ? action() : 1;
        out.flush();
        return code;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        err << "runtime error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace drshift
