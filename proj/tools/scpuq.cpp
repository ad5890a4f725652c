// scpuq: solve parametrized complementarity models, propagate parameter
// covariance to the solution and compare against Monte-Carlo.
//
// Exit codes: 0 success, 1 solver failure, 2 input parse error, 3 validation error.

#include "scpuq/scpuq.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace scpuq;
using io::json;

namespace {

constexpr int kExitSolverFailure = 1;
constexpr int kExitParse = 2;
constexpr int kExitValidation = 3;

class SolverFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string model_path;
    std::string out_dir = ".";
    std::string cov_path;
    std::string cv;
    std::optional<double> wiener;
    std::optional<double> tau;
    std::optional<double> tol;
    std::uint64_t seed = 1;
    std::optional<std::size_t> samples;
    std::size_t runs = 5;
    double budget = 600.0;
    std::vector<std::size_t> sizes;
};

double parse_fraction(const std::string& text) {
    std::string t = text;
    bool percent = false;
    if (!t.empty() && t.back() == '%') {
        percent = true;
        t.pop_back();
    }
    const double v = io::parse_double(t, "--cv");
    if (v < 0.0) throw ValidationError("--cv must be nonnegative");
    return percent ? v / 100.0 : v;
}

SolverConfig solver_config(const RunConfig& rc) {
    SolverConfig cfg;
    if (rc.tol) cfg.residual_tol = *rc.tol;
    cfg.validate();
    return cfg;
}

CovarianceModel covariance_for(const RunConfig& rc, const models::LoadedModel& model) {
    const int sources = static_cast<int>(!rc.cov_path.empty()) + static_cast<int>(!rc.cv.empty()) +
                        static_cast<int>(rc.wiener.has_value());
    if (sources > 1) throw ValidationError("give exactly one covariance source (--cov, --cv or --wiener)");
    const ParametrizedNCP& p = model.problem;
    if (!rc.cov_path.empty()) return models::load_covariance_file(rc.cov_path, model);
    if (!rc.cv.empty()) return CovarianceModel::from_cv(p.theta_mean, parse_fraction(rc.cv), p.parameter_names);
    if (rc.wiener) {
        if (!model.gas) throw ValidationError("--wiener applies to gas models only");
        std::map<models::GasParamFamily, double> cv;
        for (auto f : models::kGasParamFamilies) cv[f] = *rc.wiener;
        return models::gas_wiener_covariance(*model.gas, cv);
    }
    if (model.default_covariance) return *model.default_covariance;
    throw ValidationError("no covariance: pass --cov, --cv or --wiener, or add theta_spec.covariance to the model");
}

std::string out_path(const RunConfig& rc, const std::string& name) {
    fs::create_directories(rc.out_dir);
    return (fs::path(rc.out_dir) / name).string();
}

struct Solved {
    models::LoadedModel model;
    SolveReport report;
    SolutionPoint point;
};

Solved solve_model(const RunConfig& rc, bool require_convergence = true) {
    Solved s{models::load_model_file(rc.model_path), {}, {}};
    const ParametrizedNCP& p = s.model.problem;
    s.report = solve(p, p.theta_mean, solver_config(rc));
    if (require_convergence && !s.report.converged)
        throw SolverFailure("solver did not converge: " + s.report.message + " (merit " + io::format_double(s.report.merit) + ")");
    if (s.report.converged) {
        const double tau = rc.tau ? *rc.tau : default_tau(s.report.x_star);
        s.point = classify_activity(p, s.report.x_star, p.theta_mean, tau);
    }
    return s;
}

json gas_residual_json(const models::GasResidualReport& r) {
    return {{"market_clearing", r.market_clearing},
            {"production_capacity_accounting", r.production_capacity},
            {"arc_capacity_accounting", r.arc_capacity},
            {"nodal_balance", r.nodal_balance},
            {"inverse_demand", r.inverse_demand}};
}

int cmd_solve(const RunConfig& rc) {
    Solved s = solve_model(rc, false);
    const ParametrizedNCP& p = s.model.problem;
    const Vector& x = s.report.x_star;
    const double tol = 1e-8;
    const SolutionCheck chk = check_solution(p, x, p.theta_mean, tol);

    json doc;
    doc["model"] = rc.model_path;
    doc["type"] = s.model.type;
    doc["units"] = s.model.units;
    doc["converged"] = s.report.converged;
    doc["iterations"] = s.report.iterations;
    doc["merit"] = s.report.merit;
    doc["message"] = s.report.message;
    doc["residuals"] = {{"primal_violation", chk.primal_violation},
                        {"dual_violation", chk.dual_violation},
                        {"complementarity", chk.complementarity},
                        {"max_pair_residual", chk.max_pair_residual}};
    if (s.model.gas) doc["residuals"]["gas"] = gas_residual_json(models::gas_residuals(*s.model.gas, x, p.theta_mean));

    io::Table csv;
    csv.header = {"variable", "value", "F", "activity"};
    json vars = json::array();
    for (std::size_t i = 0; i < p.n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const std::string act = s.report.converged ? to_string(s.point.activity[i]) : "unclassified";
        vars.push_back({{"name", p.variable_name(i)}, {"value", x[k]}, {"F", chk.F[k]}, {"activity", act}});
        csv.rows.push_back({p.variable_name(i), io::format_double(x[k]), io::format_double(chk.F[k]), act});
    }
    doc["variables"] = vars;
    io::write_json(out_path(rc, "solution.json"), doc);
    io::write_text_file(out_path(rc, "solution.csv"), csv.to_csv());

    std::cout << "converged: " << (s.report.converged ? "yes" : "no") << " (" << s.report.iterations
              << " iterations, merit " << s.report.merit << ")\n";
    std::cout << "complementarity residual: " << chk.max_pair_residual << "\n";
    if (s.model.gas) {
        const auto r = models::gas_residuals(*s.model.gas, x, p.theta_mean);
        std::cout << "market-clearing residual: " << r.market_clearing << "\n";
    }
    return s.report.converged ? 0 : kExitSolverFailure;
}

void write_sensitivity(const RunConfig& rc, const ParametrizedNCP& p, const Vector& S) {
    std::vector<std::size_t> order(p.m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return S[static_cast<Eigen::Index>(a)] > S[static_cast<Eigen::Index>(b)];
    });
    io::Table t;
    t.header = {"rank", "parameter", "sensitivity", "scaled_sensitivity", "mean"};
    for (std::size_t r = 0; r < order.size(); ++r) {
        const auto d = static_cast<Eigen::Index>(order[r]);
        t.rows.push_back({std::to_string(r + 1), p.parameter_name(order[r]), io::format_double(S[d]),
                          io::format_double(S[d] * std::abs(p.theta_mean[d])), io::format_double(p.theta_mean[d])});
    }
    io::write_text_file(out_path(rc, "sensitivity.csv"), t.to_csv());
}

json diagnostics_json(const ParametrizedNCP& p, const SolutionPoint& sol, const LinearResponse& lr) {
    json weak = json::array();
    for (std::size_t i : lr.weak_indices) weak.push_back(p.variable_name(i));
    return {{"kappa_H", lr.kappa_H},
            {"ill_conditioned", !(lr.kappa_H <= kIllConditionedThreshold)},
            {"rank_Phi_prime", lr.rank_Phi},
            {"n", p.n},
            {"m", p.m},
            {"used_pseudoinverse", lr.used_pseudoinverse},
            {"tau", sol.tau},
            {"weak_set", weak}};
}

int cmd_propagate(const RunConfig& rc, bool with_covariance) {
    Solved s = solve_model(rc);
    const ParametrizedNCP& p = s.model.problem;
    std::optional<CovarianceModel> C;
    if (with_covariance) C = covariance_for(rc, s.model);
    const LinearResponse lr = build_linear_response(p, s.point);
    json diag = diagnostics_json(p, s.point, lr);
    write_sensitivity(rc, p, sensitivity(lr));
    io::write_matrix_csv(out_path(rc, "T.csv"), {lr.T, p.variable_names, p.parameter_names});
    if (C) {
        const PropagationResult pr = propagate_covariance(lr, *C);
        io::write_matrix_csv(out_path(rc, "Cstar.csv"), {pr.C_star, p.variable_names, p.variable_names});
        diag["trace"] = pr.trace;
        std::cout << "trace(C*) = " << pr.trace << "\n";
    }
    io::write_json(out_path(rc, "diagnostics.json"), diag);
    std::cout << "kappa_H = " << lr.kappa_H << ", rank = " << lr.rank_Phi << "/" << p.n
              << ", weak indices = " << lr.weak_indices.size() << "\n";
    return 0;
}

int cmd_mc_compare(const RunConfig& rc) {
    Solved s = solve_model(rc);
    const ParametrizedNCP& p = s.model.problem;
    const CovarianceModel C = covariance_for(rc, s.model);
    const SolverConfig cfg = solver_config(rc);

    const auto t0 = std::chrono::steady_clock::now();
    const LinearResponse lr = build_linear_response(p, s.point);
    const PropagationResult pr = propagate_covariance(lr, C);
    const double approx_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::size_t k = random_parameter_count(C);
    const std::size_t samples = rc.samples ? *rc.samples : benchmark_sample_count(k);

    SamplingPlan pilot;
    pilot.n_samples = std::min<std::size_t>(samples, 16);
    pilot.seed = rc.seed;
    const McReport pr_pilot = mc_covariance(p, p.theta_mean, C, pilot, s.report.x_star, cfg);
    const double per_solve = pr_pilot.wall_seconds / static_cast<double>(pr_pilot.solve_count);
    const double estimate = per_solve * static_cast<double>(samples * rc.runs);
    const bool extrapolated = estimate > rc.budget;

    json runs = json::array();
    io::Table traces;
    traces.header = {"run", "seed", "samples", "failures", "trace", "unreliable"};
    io::Table timing;
    timing.header = {"method", "run", "solves", "seconds", "extrapolated"};
    timing.rows.push_back({"approximation", "0", "1", io::format_double(approx_seconds), "false"});
    std::vector<double> mc_traces;
    bool any_unreliable = false;
    if (!extrapolated) {
        for (std::size_t r = 0; r < rc.runs; ++r) {
            SamplingPlan plan;
            plan.n_samples = samples;
            plan.seed = rc.seed + r;
            const McReport rep = mc_covariance(p, p.theta_mean, C, plan, s.report.x_star, cfg);
            mc_traces.push_back(rep.trace);
            any_unreliable = any_unreliable || rep.unreliable;
            runs.push_back({{"run", r + 1}, {"seed", plan.seed}, {"trace", rep.trace}, {"failures", rep.failures},
                            {"unreliable", rep.unreliable}});
            traces.rows.push_back({std::to_string(r + 1), std::to_string(plan.seed), std::to_string(samples),
                                   std::to_string(rep.failures), io::format_double(rep.trace),
                                   rep.unreliable ? "true" : "false"});
            timing.rows.push_back({"monte_carlo", std::to_string(r + 1), std::to_string(rep.solve_count),
                                   io::format_double(rep.wall_seconds), "false"});
        }
    } else {
        timing.rows.push_back({"monte_carlo", "estimate", std::to_string(samples * rc.runs), io::format_double(estimate), "true"});
    }

    json doc;
    doc["model"] = rc.model_path;
    doc["random_parameters"] = k;
    doc["samples_per_run"] = samples;
    doc["seed"] = rc.seed;
    doc["approximation_trace"] = pr.trace;
    doc["mc_runs"] = runs;
    doc["budget_exceeded"] = extrapolated;
    if (!mc_traces.empty()) {
        const double lo = *std::min_element(mc_traces.begin(), mc_traces.end());
        const double hi = *std::max_element(mc_traces.begin(), mc_traces.end());
        const double mean = std::accumulate(mc_traces.begin(), mc_traces.end(), 0.0) / static_cast<double>(mc_traces.size());
        doc["mc_min"] = lo;
        doc["mc_max"] = hi;
        doc["mc_mean"] = mean;
        doc["within_band"] = lo <= pr.trace && pr.trace <= hi;
        doc["relative_gap"] = (pr.trace - mean) / mean;
        doc["unreliable"] = any_unreliable;
        std::cout << "approximation trace " << pr.trace << ", MC band [" << lo << ", " << hi << "]\n";
    } else {
        std::cout << "Monte-Carlo skipped: estimated " << estimate << " s exceeds budget " << rc.budget << " s\n";
    }
    io::write_json(out_path(rc, "comparison.json"), doc);
    io::write_text_file(out_path(rc, "mc_traces.csv"), traces.to_csv());
    io::write_text_file(out_path(rc, "timing.csv"), timing.to_csv());
    return 0;
}

int cmd_race(const RunConfig& rc) {
    std::vector<std::size_t> sizes = rc.sizes;
    if (sizes.empty()) sizes = {5, 10, 15};
    RaceOptions opt;
    opt.mc_budget_seconds = rc.budget;
    opt.seed = rc.seed;
    opt.solver = solver_config(rc);
    const auto rows = race(
        [](std::size_t n) {
            const models::OligopolyConfig cfg = models::benchmark_oligopoly_config(n);
            ParametrizedNCP prob = models::make_oligopoly(cfg);
            return RaceInstance{prob, CovarianceModel::diagonal(models::oligopoly_variances(n, 1.0, 0.0, 0.0), prob.parameter_names)};
        },
        sizes, opt);
    io::Table t;
    t.header = {"size", "variables", "random_parameters", "approx_seconds", "approx_trace", "mc_samples",
                "mean_solve_seconds", "mc_seconds", "mc_extrapolated", "mc_trace"};
    for (const auto& r : rows) {
        t.rows.push_back({std::to_string(r.size), std::to_string(r.variables), std::to_string(r.random_parameters),
                          io::format_double(r.approx_seconds), io::format_double(r.approx_trace),
                          std::to_string(r.mc_samples), io::format_double(r.mean_solve_seconds),
                          io::format_double(r.mc_seconds), r.mc_extrapolated ? "true" : "false",
                          io::format_double(r.mc_trace)});
        std::cout << "n=" << r.size << " approx " << r.approx_seconds << " s, MC " << r.mc_samples << " solves "
                  << r.mc_seconds << " s" << (r.mc_extrapolated ? " (extrapolated)" : "") << "\n";
    }
    io::write_text_file(out_path(rc, "race.csv"), t.to_csv());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Covariance of complementarity-problem solutions under random parameters"};
    app.require_subcommand(1);
    RunConfig rc;

    auto common = [&](CLI::App* sub, bool needs_model) {
        auto* m = sub->add_option("--model", rc.model_path, "model JSON file");
        if (needs_model) m->required()->check(CLI::ExistingFile);
        sub->add_option("--out", rc.out_dir, "output directory")->capture_default_str();
        sub->add_option("--tau", rc.tau, "activity classification tolerance");
        sub->add_option("--tol", rc.tol, "solver merit tolerance");
        sub->add_option("--seed", rc.seed, "random seed")->capture_default_str();
    };
    auto covariance_flags = [&](CLI::App* sub) {
        sub->add_option("--cov", rc.cov_path, "covariance JSON file")->check(CLI::ExistingFile);
        sub->add_option("--cv", rc.cv, "independent parameters with this coefficient of variation (0.1 or 10%)");
        sub->add_option("--wiener", rc.wiener, "gas models: Wiener covariance over years with this cv");
    };

    auto* s_solve = app.add_subcommand("solve", "solve the model at the mean parameters");
    common(s_solve, true);
    auto* s_prop = app.add_subcommand("propagate", "first-order solution covariance and sensitivities");
    common(s_prop, true);
    covariance_flags(s_prop);
    auto* s_sens = app.add_subcommand("sensitivity", "parameter sensitivities (no covariance needed)");
    common(s_sens, true);
    auto* s_mc = app.add_subcommand("mc-compare", "compare the approximation with Monte-Carlo runs");
    common(s_mc, true);
    covariance_flags(s_mc);
    s_mc->add_option("--samples", rc.samples, "samples per Monte-Carlo run");
    s_mc->add_option("--runs", rc.runs, "number of Monte-Carlo runs")->capture_default_str();
    s_mc->add_option("--budget", rc.budget, "Monte-Carlo time budget in seconds")->capture_default_str();
    auto* s_race = app.add_subcommand("race", "run-time comparison on benchmark oligopolies");
    common(s_race, false);
    s_race->add_option("--sizes", rc.sizes, "numbers of players, e.g. 5,10,15")->delimiter(',');
    s_race->add_option("--budget", rc.budget, "Monte-Carlo time budget per size in seconds")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitParse;
    }

    try {
        if (s_solve->parsed()) return cmd_solve(rc);
        if (s_prop->parsed()) return cmd_propagate(rc, true);
        if (s_sens->parsed()) return cmd_propagate(rc, false);
        if (s_mc->parsed()) return cmd_mc_compare(rc);
        if (s_race->parsed()) return cmd_race(rc);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitParse;
    } catch (const SolverFailure& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolverFailure;
    } catch (const scpuq::Error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return 0;
}
