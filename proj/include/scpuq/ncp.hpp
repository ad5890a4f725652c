#pragma once

// Parametrized nonlinear complementarity problems over cones of the form
//   K = { x : x_i >= 0 for i in I },  K* = { v : v_i >= 0 (i in I), v_i = 0 (i not in I) }
// together with C-functions, the merit vector Phi and the scalar merit
// f = 0.5 * ||Phi||^2.

#include "scpuq/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace scpuq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class ConeSpec {
public:
    ConeSpec() = default;

    ConeSpec(std::size_t n, const std::vector<std::size_t>& nonneg_indices) : nonneg_(n, false) {
        for (std::size_t i : nonneg_indices) {
            if (i >= n) throw IndexError("ConeSpec: index " + std::to_string(i) + " >= dimension " + std::to_string(n));
            nonneg_[i] = true;
        }
    }

    /// Every coordinate sign-constrained (the classical NCP).
    static ConeSpec nonnegative_orthant(std::size_t n) { return ConeSpec(std::vector<bool>(n, true)); }

    explicit ConeSpec(std::vector<bool> mask) : nonneg_(std::move(mask)) {}

    std::size_t dim() const noexcept { return nonneg_.size(); }
    bool is_nonneg(std::size_t i) const { return nonneg_.at(i); }

    std::vector<std::size_t> nonneg_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < nonneg_.size(); ++i)
            if (nonneg_[i]) out.push_back(i);
        return out;
    }

    bool contains(const Vector& x, double tol = 0.0) const {
        check_dim(x);
        for (std::size_t i = 0; i < dim(); ++i)
            if (nonneg_[i] && x[static_cast<Eigen::Index>(i)] < -tol) return false;
        return true;
    }

    bool dual_contains(const Vector& v, double tol = 0.0) const {
        check_dim(v);
        for (std::size_t i = 0; i < dim(); ++i) {
            const double vi = v[static_cast<Eigen::Index>(i)];
            if (nonneg_[i] ? vi < -tol : std::abs(vi) > tol) return false;
        }
        return true;
    }

private:
    std::vector<bool> nonneg_;

    void check_dim(const Vector& x) const {
        if (static_cast<std::size_t>(x.size()) != dim()) {
            throw ShapeError("ConeSpec: vector of size " + std::to_string(x.size()) + " for cone of dimension " +
                             std::to_string(dim()));
        }
    }
};

/// NCP data: F(x; theta) with its Jacobians in x and theta.
struct ParametrizedNCP {
    using FunctionEval = std::function<Vector(const Vector& x, const Vector& theta)>;
    using JacobianEval = std::function<Matrix(const Vector& x, const Vector& theta)>;

    std::size_t n = 0;
    std::size_t m = 0;
    ConeSpec cone;
    Vector theta_mean;
    FunctionEval eval_F;
    JacobianEval eval_G;  ///< G_ij = dF_i/dx_j
    JacobianEval eval_L;  ///< L_ij = dF_i/dtheta_j
    std::vector<std::string> variable_names;
    std::vector<std::string> parameter_names;
    /// Model-specific starting point for the solver; empty when none.
    Vector initial_guess;

    void validate() const {
        if (cone.dim() != n) throw ShapeError("ParametrizedNCP: cone dimension differs from n");
        if (static_cast<std::size_t>(theta_mean.size()) != m) throw ShapeError("ParametrizedNCP: theta_mean size != m");
        if (!eval_F || !eval_G || !eval_L) throw ValidationError("ParametrizedNCP: missing evaluator");
        if (!variable_names.empty() && variable_names.size() != n)
            throw ShapeError("ParametrizedNCP: variable_names size != n");
        if (!parameter_names.empty() && parameter_names.size() != m)
            throw ShapeError("ParametrizedNCP: parameter_names size != m");
    }

    std::string variable_name(std::size_t i) const {
        return i < variable_names.size() ? variable_names[i] : "x" + std::to_string(i);
    }
    std::string parameter_name(std::size_t d) const {
        return d < parameter_names.size() ? parameter_names[d] : "theta" + std::to_string(d);
    }

    Vector F(const Vector& x, const Vector& theta) const {
        check(x, theta);
        Vector out = eval_F(x, theta);
        if (static_cast<std::size_t>(out.size()) != n) throw ShapeError("ParametrizedNCP: F returned wrong size");
        if (!out.allFinite()) throw EvaluationError("ParametrizedNCP: F produced a non-finite value");
        return out;
    }
    Matrix G(const Vector& x, const Vector& theta) const {
        check(x, theta);
        Matrix out = eval_G(x, theta);
        if (static_cast<std::size_t>(out.rows()) != n || static_cast<std::size_t>(out.cols()) != n)
            throw ShapeError("ParametrizedNCP: G has wrong shape");
        if (!out.allFinite()) throw EvaluationError("ParametrizedNCP: G produced a non-finite value");
        return out;
    }
    Matrix L(const Vector& x, const Vector& theta) const {
        check(x, theta);
        Matrix out = eval_L(x, theta);
        if (static_cast<std::size_t>(out.rows()) != n || static_cast<std::size_t>(out.cols()) != m)
            throw ShapeError("ParametrizedNCP: L has wrong shape");
        if (!out.allFinite()) throw EvaluationError("ParametrizedNCP: L produced a non-finite value");
        return out;
    }

private:
    void check(const Vector& x, const Vector& theta) const {
        if (static_cast<std::size_t>(x.size()) != n)
            throw ShapeError("ParametrizedNCP: x has size " + std::to_string(x.size()) + ", expected " +
                             std::to_string(n));
        if (static_cast<std::size_t>(theta.size()) != m)
            throw ShapeError("ParametrizedNCP: theta has size " + std::to_string(theta.size()) + ", expected " +
                             std::to_string(m));
    }
};

enum class CFunctionKind { Min, FischerBurmeister };

/// Bivariate function vanishing exactly on { a >= 0, b >= 0, ab = 0 }.
class CFunction {
public:
    constexpr explicit CFunction(CFunctionKind kind = CFunctionKind::Min) : kind_(kind) {}

    static constexpr CFunction min() { return CFunction(CFunctionKind::Min); }
    static constexpr CFunction fischer_burmeister() { return CFunction(CFunctionKind::FischerBurmeister); }

    constexpr CFunctionKind kind() const noexcept { return kind_; }

    const char* name() const noexcept { return kind_ == CFunctionKind::Min ? "min" : "fischer-burmeister"; }

    double psi(double a, double b) const {
        if (kind_ == CFunctionKind::Min) return std::min(a, b);
        return std::hypot(a, b) - a - b;
    }

    // Ties a == b take the b-branch.
    double psi_a(double a, double b) const {
        if (kind_ == CFunctionKind::Min) return a < b ? 1.0 : 0.0;
        const double r = std::hypot(a, b);
        return r == 0.0 ? -1.0 : a / r - 1.0;
    }

    double psi_b(double a, double b) const {
        if (kind_ == CFunctionKind::Min) return a < b ? 0.0 : 1.0;
        const double r = std::hypot(a, b);
        return r == 0.0 ? -1.0 : b / r - 1.0;
    }

private:
    CFunctionKind kind_;
};

enum class Activity {
    Free,     ///< i not in I
    StrongX,  ///< x_i > tau, F_i ~ 0
    StrongF,  ///< F_i > tau, x_i ~ 0
    Weak      ///< both ~ 0: the index set Z
};

inline const char* to_string(Activity a) noexcept {
    switch (a) {
        case Activity::Free: return "free";
        case Activity::StrongX: return "strong-x";
        case Activity::StrongF: return "strong-F";
        case Activity::Weak: return "weak";
    }
    return "unknown";
}

/// A solution at theta together with its activity classification.
struct SolutionPoint {
    Vector x_star;
    Vector F_star;
    Vector theta;
    std::vector<Activity> activity;
    double tau = 0.0;

    bool is_weak(std::size_t i) const { return activity.at(i) == Activity::Weak; }

    std::vector<std::size_t> weak_set() const {
        std::vector<std::size_t> z;
        for (std::size_t i = 0; i < activity.size(); ++i)
            if (activity[i] == Activity::Weak) z.push_back(i);
        return z;
    }
};

/// tau = 1e-6 * max(1, ||x||_inf)
inline double default_tau(const Vector& x_star) {
    const double scale = x_star.size() ? x_star.cwiseAbs().maxCoeff() : 0.0;
    return 1e-6 * std::max(1.0, scale);
}

inline SolutionPoint classify_activity(const ParametrizedNCP& problem, const Vector& x_star, const Vector& theta,
                                       double tau) {
    if (!(tau >= 0.0)) throw DomainError("classify_activity: tau must be nonnegative");
    SolutionPoint sol;
    sol.x_star = x_star;
    sol.F_star = problem.F(x_star, theta);
    sol.theta = theta;
    sol.tau = tau;
    sol.activity.resize(problem.n);
    for (std::size_t i = 0; i < problem.n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (!problem.cone.is_nonneg(i)) {
            sol.activity[i] = Activity::Free;
            continue;
        }
        const double xi = x_star[k];
        const double fi = sol.F_star[k];
        if (xi < -tau) {
            throw InfeasiblePointError("classify_activity: x[" + std::to_string(i) + "] = " + std::to_string(xi) +
                                       " violates the cone");
        }
        if (fi < -tau) {
            throw InfeasiblePointError("classify_activity: F[" + std::to_string(i) + "] = " + std::to_string(fi) +
                                       " violates the dual cone");
        }
        const bool x_zero = std::abs(xi) <= tau;
        const bool f_zero = std::abs(fi) <= tau;
        if (x_zero && f_zero) {
            sol.activity[i] = Activity::Weak;
        } else if (!x_zero && f_zero) {
            sol.activity[i] = Activity::StrongX;
        } else if (x_zero && !f_zero) {
            sol.activity[i] = Activity::StrongF;
        } else {
            throw InfeasiblePointError("classify_activity: index " + std::to_string(i) +
                                       " has x and F both positive (not complementary)");
        }
    }
    return sol;
}

inline SolutionPoint classify_activity(const ParametrizedNCP& problem, const Vector& x_star, const Vector& theta) {
    return classify_activity(problem, x_star, theta, default_tau(x_star));
}

/// Phi_i = F_i for free rows, psi^2 for rows in Z (frozen at classification), psi otherwise.
inline Vector merit_vector(const ParametrizedNCP& problem, const SolutionPoint& sol, const CFunction& psi,
                           const Vector& x, const Vector& theta) {
    if (sol.activity.size() != problem.n) throw ShapeError("merit_vector: solution point not classified for this problem");
    const Vector F = problem.F(x, theta);
    Vector phi(static_cast<Eigen::Index>(problem.n));
    for (std::size_t i = 0; i < problem.n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (!problem.cone.is_nonneg(i)) {
            phi[k] = F[k];
        } else {
            const double v = psi.psi(x[k], F[k]);
            phi[k] = sol.is_weak(i) ? v * v : v;
        }
    }
    return phi;
}

inline double merit_scalar(const ParametrizedNCP& problem, const SolutionPoint& sol, const CFunction& psi,
                           const Vector& x, const Vector& theta) {
    return 0.5 * merit_vector(problem, sol, psi, x, theta).squaredNorm();
}

/// Residual report for x against the complementarity conditions at theta.
struct SolutionCheck {
    bool ok = false;
    double primal_violation = 0.0;   ///< max over I of max(0, -x_i)
    double dual_violation = 0.0;     ///< max of max(0, -F_i) over I and |F_i| off I
    double complementarity = 0.0;    ///< |x^T F|
    double max_pair_residual = 0.0;  ///< max over I of |min(x_i, F_i)|
    Vector F;
};

inline SolutionCheck check_solution(const ParametrizedNCP& problem, const Vector& x, const Vector& theta, double tol) {
    SolutionCheck r;
    r.F = problem.F(x, theta);
    for (std::size_t i = 0; i < problem.n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (problem.cone.is_nonneg(i)) {
            r.primal_violation = std::max(r.primal_violation, -x[k]);
            r.dual_violation = std::max(r.dual_violation, -r.F[k]);
            r.max_pair_residual = std::max(r.max_pair_residual, std::abs(std::min(x[k], r.F[k])));
        } else {
            r.dual_violation = std::max(r.dual_violation, std::abs(r.F[k]));
        }
    }
    r.complementarity = std::abs(x.dot(r.F));
    r.ok = r.primal_violation <= tol && r.dual_violation <= tol && r.complementarity <= tol;
    return r;
}

}  // namespace scpuq
