#pragma once

// Monte-Carlo estimation of the solution covariance, used to validate the
// first-order approximation and to compare run times.

#include "scpuq/error.hpp"
#include "scpuq/ncp.hpp"
#include "scpuq/parallel.hpp"
#include "scpuq/solver.hpp"
#include "scpuq/uq.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace scpuq {

enum class SamplingScheme {
    BalancedStratified,  ///< antithetic pairs: every dimension split evenly between its two half-line strata
    Plain
};

struct SamplingPlan {
    std::size_t n_samples = 100;
    std::size_t strata_per_dim = 2;
    SamplingScheme scheme = SamplingScheme::BalancedStratified;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_samples < 2) throw ValidationError("SamplingPlan: need at least 2 samples");
        if (scheme == SamplingScheme::BalancedStratified && strata_per_dim != 2)
            throw ValidationError("SamplingPlan: the balanced design uses exactly 2 strata per dimension");
    }
};

/// max(100, ceil(0.1 * 2^n)) samples for an n-parameter study.
inline std::size_t benchmark_sample_count(std::size_t n) {
    const double rule = std::ceil(0.1 * std::ldexp(1.0, static_cast<int>(n)));
    return std::max<std::size_t>(100, static_cast<std::size_t>(rule));
}

/// Square-root factor F with F F^T = C from a pivoted LDL^T decomposition, so
/// singular PSD matrices (fixed parameters) factor without jitter.
inline Matrix covariance_factor(const CovarianceModel& C) {
    const Matrix& M = C.matrix();
    const auto m = M.rows();
    if (m == 0) return Matrix(0, 0);
    Eigen::LDLT<Matrix> ldlt(M);
    const double floor = -1e-10 * std::max(M.trace(), std::numeric_limits<double>::min());
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < floor)
        throw ValidationError("covariance_factor: covariance could not be factored as PSD");
    const Vector sqrt_d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    const Matrix L = ldlt.matrixL();
    Matrix F = L * sqrt_d.asDiagonal();
    return ldlt.transpositionsP().transpose() * F;
}

/// Gaussian samples (one per row) with mean theta_bar and covariance C.
inline Matrix sample_parameters(const CovarianceModel& C, const Vector& theta_bar, const SamplingPlan& plan) {
    plan.validate();
    const auto m = theta_bar.size();
    if (C.dim() != m) throw ShapeError("sample_parameters: covariance and mean differ in dimension");
    const Matrix F = covariance_factor(C);
    std::mt19937_64 rng(plan.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto N = static_cast<Eigen::Index>(plan.n_samples);
    Matrix Z(N, m);
    if (plan.scheme == SamplingScheme::Plain) {
        for (Eigen::Index s = 0; s < N; ++s)
            for (Eigen::Index d = 0; d < m; ++d) Z(s, d) = normal(rng);
    } else {
        for (Eigen::Index s = 0; s + 1 < N; s += 2) {
            for (Eigen::Index d = 0; d < m; ++d) {
                Z(s, d) = normal(rng);
                Z(s + 1, d) = -Z(s, d);
            }
        }
        if (N % 2 == 1)
            for (Eigen::Index d = 0; d < m; ++d) Z(N - 1, d) = normal(rng);
    }
    Matrix out = Z * F.transpose();
    out.rowwise() += theta_bar.transpose();
    return out;
}

/// Unbiased (N - 1) sample covariance of the rows.
inline Matrix empirical_covariance(const Matrix& rows) {
    if (rows.rows() < 2) throw ValidationError("empirical_covariance: need at least two rows");
    const Matrix centered = rows.rowwise() - rows.colwise().mean();
    Matrix C = centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
    return 0.5 * (C + C.transpose());
}

struct McReport {
    Vector mean;
    Matrix covariance;
    double trace = 0.0;
    double wall_seconds = 0.0;
    std::size_t solve_count = 0;
    std::size_t failures = 0;
    bool unreliable = false;  ///< more than 5% of solves failed
    Matrix solutions;         ///< successful solutions in sample order
    Matrix samples;           ///< parameter draws
};

inline constexpr double kMaxFailureFraction = 0.05;

/// Solves the NCP at every parameter draw, warm-started from the solution at
/// theta_bar, and estimates the solution covariance. Failed solves are
/// excluded and counted.
inline McReport mc_covariance(const ParametrizedNCP& problem, const Vector& theta_bar, const CovarianceModel& C,
                              const SamplingPlan& plan, const std::optional<Vector>& x_ref = std::nullopt,
                              const SolverConfig& cfg = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    Vector warm;
    if (x_ref) {
        warm = *x_ref;
    } else {
        const SolveReport base = solve(problem, theta_bar, cfg);
        if (!base.converged) throw ValidationError("mc_covariance: solve at theta_bar did not converge");
        warm = base.x_star;
    }
    McReport rep;
    rep.samples = sample_parameters(C, theta_bar, plan);
    const auto N = static_cast<std::size_t>(rep.samples.rows());
    const auto n = static_cast<Eigen::Index>(problem.n);
    Matrix xs(static_cast<Eigen::Index>(N), n);
    std::vector<char> ok(N, 0);
    parallel_for(N, [&](std::size_t s) {
        const auto row = static_cast<Eigen::Index>(s);
        try {
            const SolveReport r = solve_perturbed(problem, rep.samples.row(row).transpose(), warm, cfg);
            if (r.converged) {
                xs.row(row) = r.x_star.transpose();
                ok[s] = 1;
            }
        } catch (const EvaluationError&) {
        }
    });
    rep.solve_count = N;
    std::vector<Eigen::Index> good;
    for (std::size_t s = 0; s < N; ++s)
        if (ok[s]) good.push_back(static_cast<Eigen::Index>(s));
    rep.failures = N - good.size();
    rep.unreliable = static_cast<double>(rep.failures) > kMaxFailureFraction * static_cast<double>(N);
    rep.solutions = Matrix(static_cast<Eigen::Index>(good.size()), n);
    for (std::size_t k = 0; k < good.size(); ++k) rep.solutions.row(static_cast<Eigen::Index>(k)) = xs.row(good[k]);
    if (good.size() >= 2) {
        rep.mean = rep.solutions.colwise().mean().transpose();
        rep.covariance = empirical_covariance(rep.solutions);
        rep.trace = rep.covariance.trace();
    } else {
        rep.unreliable = true;
        rep.mean = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
        rep.covariance = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
        rep.trace = std::numeric_limits<double>::quiet_NaN();
    }
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

/// Parameters with nonzero variance.
inline std::size_t random_parameter_count(const CovarianceModel& C) {
    std::size_t k = 0;
    for (Eigen::Index d = 0; d < C.dim(); ++d)
        if (C.matrix()(d, d) > 0.0) ++k;
    return k;
}

/// A problem instance with its input covariance, generated per race size.
struct RaceInstance {
    ParametrizedNCP problem;
    CovarianceModel covariance;
};

struct RaceOptions {
    double mc_budget_seconds = 60.0;  ///< MC runs estimated above this are extrapolated
    std::size_t pilot_solves = 32;
    double min_timing_seconds = 0.02;  ///< repeat the approximation until this much time has elapsed
    std::uint64_t seed = 0;
    SolverConfig solver;
};

struct RaceRow {
    std::size_t size = 0;
    std::size_t variables = 0;
    std::size_t parameters = 0;
    std::size_t random_parameters = 0;
    double approx_seconds = 0.0;
    double approx_trace = 0.0;
    std::size_t mc_samples = 0;
    double mc_seconds = 0.0;
    double mean_solve_seconds = 0.0;
    bool mc_extrapolated = false;
    double mc_trace = std::numeric_limits<double>::quiet_NaN();
};

/// Wall-clock comparison of one build_linear_response + propagate_covariance
/// against a full Monte-Carlo run with benchmark_sample_count(k) samples, k the
/// number of random parameters.
inline std::vector<RaceRow> race(const std::function<RaceInstance(std::size_t)>& generate,
                                 const std::vector<std::size_t>& sizes, const RaceOptions& opt = {}) {
    using clock = std::chrono::steady_clock;
    std::vector<RaceRow> rows;
    for (std::size_t size : sizes) {
        const RaceInstance inst = generate(size);
        const ParametrizedNCP& p = inst.problem;
        RaceRow row;
        row.size = size;
        row.variables = p.n;
        row.parameters = p.m;
        const SolveReport base = solve(p, p.theta_mean, opt.solver);
        if (!base.converged) throw ValidationError("race: base solve failed at size " + std::to_string(size));
        const SolutionPoint sol = classify_activity(p, base.x_star, p.theta_mean);

        int reps = 0;
        double elapsed = 0.0;
        while (reps < 3 || elapsed < opt.min_timing_seconds) {
            const auto t0 = clock::now();
            const LinearResponse lr = build_linear_response(p, sol);
            const PropagationResult pr = propagate_covariance(lr, inst.covariance);
            elapsed += std::chrono::duration<double>(clock::now() - t0).count();
            row.approx_trace = pr.trace;
            ++reps;
        }
        row.approx_seconds = elapsed / reps;

        row.random_parameters = random_parameter_count(inst.covariance);
        row.mc_samples = benchmark_sample_count(row.random_parameters);
        SamplingPlan pilot_plan;
        pilot_plan.n_samples = std::max<std::size_t>(2, opt.pilot_solves);
        pilot_plan.seed = opt.seed;
        const McReport pilot = mc_covariance(p, p.theta_mean, inst.covariance, pilot_plan, base.x_star, opt.solver);
        row.mean_solve_seconds = pilot.wall_seconds / static_cast<double>(pilot.solve_count);
        const double estimate = row.mean_solve_seconds * static_cast<double>(row.mc_samples);
        if (estimate > opt.mc_budget_seconds) {
            row.mc_extrapolated = true;
            row.mc_seconds = estimate;
        } else {
            SamplingPlan plan;
            plan.n_samples = row.mc_samples;
            plan.seed = opt.seed;
            const McReport full = mc_covariance(p, p.theta_mean, inst.covariance, plan, base.x_star, opt.solver);
            row.mc_seconds = full.wall_seconds;
            row.mc_trace = full.trace;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace scpuq
