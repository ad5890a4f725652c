#pragma once

// Semismooth Newton method on the Fischer-Burmeister reformulation
//   Phi_i = F_i                 (i free)
//   Phi_i = psi_FB(x_i, F_i)    (i in I)
// with Armijo backtracking on f = 0.5 ||Phi||^2 and a Levenberg-Marquardt
// fallback when the generalized Jacobian is singular or the Newton step fails
// to descend.

#include "scpuq/error.hpp"
#include "scpuq/ncp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace scpuq {

struct SolverConfig {
    int max_iter = 200;
    double residual_tol = 1e-18;  ///< converged when f(x) <= residual_tol
    double armijo_c1 = 1e-4;
    double regularization = 1e-8;  ///< lambda = regularization * ||J^T J||_inf, doubled on failure
    double min_step = 1e-12;
    int polish_steps = 3;  ///< extra full Newton steps after convergence while f keeps decreasing
    std::optional<Vector> x0;

    void validate() const {
        if (!(residual_tol > 0.0)) throw ValidationError("SolverConfig: residual_tol must be positive");
        if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0)) throw ValidationError("SolverConfig: armijo c1 must lie in (0,1)");
        if (max_iter < 0) throw ValidationError("SolverConfig: max_iter must be nonnegative");
        if (!(regularization > 0.0)) throw ValidationError("SolverConfig: regularization must be positive");
    }
};

struct SolveReport {
    Vector x_star;
    int iterations = 0;
    double merit = std::numeric_limits<double>::infinity();
    bool converged = false;
    int regularized_steps = 0;
    std::string message;
};

namespace detail {

inline Vector fb_residual(const ParametrizedNCP& p, const Vector& x, const Vector& F) {
    constexpr CFunction fb = CFunction::fischer_burmeister();
    Vector phi(F.size());
    for (std::size_t i = 0; i < p.n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        phi[k] = p.cone.is_nonneg(i) ? fb.psi(x[k], F[k]) : F[k];
    }
    return phi;
}

/// Element of the generalized Jacobian of the FB residual.
inline Matrix fb_jacobian(const ParametrizedNCP& p, const Vector& x, const Vector& F, const Matrix& G) {
    constexpr CFunction fb = CFunction::fischer_burmeister();
    Matrix H = G;
    for (std::size_t i = 0; i < p.n; ++i) {
        if (!p.cone.is_nonneg(i)) continue;
        const auto k = static_cast<Eigen::Index>(i);
        const double da = fb.psi_a(x[k], F[k]);
        const double db = fb.psi_b(x[k], F[k]);
        H.row(k) *= db;
        H(k, k) += da;
    }
    return H;
}

/// Merit at x, or +inf when F cannot be evaluated there.
inline double try_merit(const ParametrizedNCP& p, const Vector& x, const Vector& theta, Vector& F, Vector& phi) {
    try {
        F = p.F(x, theta);
    } catch (const EvaluationError&) {
        return std::numeric_limits<double>::infinity();
    }
    phi = fb_residual(p, x, F);
    return 0.5 * phi.squaredNorm();
}

}  // namespace detail

/// Starting point when none is configured: the model's own guess if it has
/// one, else the better (by FB merit) of the projected least-squares zero of
/// F linearized at 0 and the all-ones vector.
inline Vector default_start(const ParametrizedNCP& problem, const Vector& theta) {
    const auto n = static_cast<Eigen::Index>(problem.n);
    if (problem.initial_guess.size() == n) return problem.initial_guess;
    Vector ones = Vector::Ones(n);
    Vector F, phi;
    const double f_ones = detail::try_merit(problem, ones, theta, F, phi);
    try {
        const Vector zero = Vector::Zero(n);
        const Vector F0 = problem.F(zero, theta);
        const Matrix G0 = problem.G(zero, theta);
        Vector lin = G0.completeOrthogonalDecomposition().solve(-F0);
        for (std::size_t i = 0; i < problem.n; ++i)
            if (problem.cone.is_nonneg(i)) lin[static_cast<Eigen::Index>(i)] = std::max(0.0, lin[static_cast<Eigen::Index>(i)]);
        if (lin.allFinite() && detail::try_merit(problem, lin, theta, F, phi) <= f_ones) return lin;
    } catch (const EvaluationError&) {
    }
    return ones;
}

inline SolveReport solve(const ParametrizedNCP& problem, const Vector& theta, const SolverConfig& cfg = {}) {
    cfg.validate();
    problem.validate();
    const auto n = static_cast<Eigen::Index>(problem.n);

    SolveReport rep;
    Vector x = cfg.x0 ? *cfg.x0 : default_start(problem, theta);
    if (x.size() != n) throw ShapeError("solve: starting point has wrong size");

    Vector F = problem.F(x, theta);  // NaN at the start point is an evaluation error
    Vector phi = detail::fb_residual(problem, x, F);
    double f = 0.5 * phi.squaredNorm();

    auto newton_direction = [&](const Matrix& H, Vector& d) {
        Eigen::PartialPivLU<Matrix> lu(H);
        if (!(lu.rcond() > 1e-14)) return false;
        d = lu.solve(-phi);
        return d.allFinite();
    };
    auto regularized_direction = [&](const Matrix& H, const Vector& grad, Vector& d) {
        const Matrix M = H.transpose() * H;
        const double scale = std::max(M.cwiseAbs().rowwise().sum().maxCoeff(), std::numeric_limits<double>::min());
        double lambda = cfg.regularization * scale;
        for (int attempt = 0; attempt < 60; ++attempt, lambda *= 2.0) {
            Eigen::LLT<Matrix> llt(M + lambda * Matrix::Identity(n, n));
            if (llt.info() != Eigen::Success) continue;
            d = llt.solve(-grad);
            if (d.allFinite() && grad.dot(d) < 0.0) return true;
        }
        return false;
    };
    auto line_search = [&](const Vector& d, const Vector& grad, Vector& x_new, Vector& F_new, Vector& phi_new,
                           double& f_new) {
        const double slope = grad.dot(d);
        if (!(slope < 0.0)) return false;
        for (double t = 1.0; t >= cfg.min_step; t *= 0.5) {
            x_new = x + t * d;
            f_new = detail::try_merit(problem, x_new, theta, F_new, phi_new);
            if (f_new <= f + cfg.armijo_c1 * t * slope) return true;
        }
        return false;
    };

    Vector x_new, F_new, phi_new, d;
    double f_new = 0.0;
    while (f > cfg.residual_tol && rep.iterations < cfg.max_iter) {
        const Matrix H = detail::fb_jacobian(problem, x, F, problem.G(x, theta));
        const Vector grad = H.transpose() * phi;
        bool accepted = false;
        if (newton_direction(H, d)) accepted = line_search(d, grad, x_new, F_new, phi_new, f_new);
        if (!accepted && regularized_direction(H, grad, d)) {
            accepted = line_search(d, grad, x_new, F_new, phi_new, f_new);
            if (accepted) ++rep.regularized_steps;
        }
        if (!accepted) {
            d = -grad;
            accepted = line_search(d, grad, x_new, F_new, phi_new, f_new);
        }
        if (!accepted) {
            rep.message = "line search failed";
            break;
        }
        x.swap(x_new);
        F.swap(F_new);
        phi.swap(phi_new);
        f = f_new;
        ++rep.iterations;
    }
    rep.converged = f <= cfg.residual_tol;
    if (rep.converged) {
        for (int k = 0; k < cfg.polish_steps && f > 0.0; ++k) {
            const Matrix H = detail::fb_jacobian(problem, x, F, problem.G(x, theta));
            if (!newton_direction(H, d)) break;
            x_new = x + d;
            f_new = detail::try_merit(problem, x_new, theta, F_new, phi_new);
            if (!(f_new < f)) break;
            x.swap(x_new);
            F.swap(F_new);
            phi.swap(phi_new);
            f = f_new;
        }
        rep.message = "converged";
    } else if (rep.message.empty()) {
        rep.message = "iteration limit reached";
    }
    rep.x_star = std::move(x);
    rep.merit = f;
    return rep;
}

/// Warm-started solve at a perturbed parameter vector.
inline SolveReport solve_perturbed(const ParametrizedNCP& problem, const Vector& theta, const Vector& warm_start,
                                   SolverConfig cfg = {}) {
    cfg.x0 = warm_start;
    return solve(problem, theta, cfg);
}

}  // namespace scpuq
