#pragma once

// First-order propagation of parameter covariance through an NCP solution.
//
// At a solution x* of the NCP at theta_bar, the Jacobian of the merit
// vector Phi' and its parameter derivative N satisfy Phi' T = N, and a
// parameter perturbation dtheta moves the solution by dx ~= -T dtheta. The
// solution covariance is then T C T^T for any input covariance C, so T is
// built once and reused across covariance scenarios.

#include "scpuq/error.hpp"
#include "scpuq/ncp.hpp"
#include "scpuq/parallel.hpp"
#include "scpuq/solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace scpuq {

/// Minimum-norm least-squares solution of A X = B with singular values below
/// eps * max(rows, cols) * sigma_max treated as zero. Also reports the rank.
inline Matrix pinv_solve(const Matrix& A, const Matrix& B, Eigen::Index* rank_out = nullptr) {
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double smax = s.size() ? s[0] : 0.0;
    const double cutoff =
        std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(A.rows(), A.cols())) * smax;
    Eigen::Index rank = 0;
    Vector inv = Vector::Zero(s.size());
    for (Eigen::Index k = 0; k < s.size(); ++k) {
        if (s[k] > cutoff) {
            inv[k] = 1.0 / s[k];
            ++rank;
        }
    }
    if (rank_out) *rank_out = rank;
    return svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * B);
}

/// Linear response of the solution to the parameters: Phi' T = N.
struct LinearResponse {
    Matrix T;
    Matrix Phi_prime;
    Matrix N_matrix;
    Eigen::Index rank_Phi = 0;
    bool used_pseudoinverse = false;
    double kappa_H = 0.0;  ///< condition number of Phi'^T Phi' over its nonzero spectrum
    std::vector<std::size_t> weak_indices;
    std::vector<std::string> variable_names;
    std::vector<std::string> parameter_names;
};

/// Builds Phi' and N row by row from the activity classification and solves
/// for T. Weak rows (the set Z) are zero in both matrices and are kept so T
/// stays n x m; they force the pseudoinverse path.
inline LinearResponse build_linear_response(const ParametrizedNCP& problem, const SolutionPoint& sol,
                                            const CFunction& psi = CFunction::min()) {
    if (sol.activity.size() != problem.n || static_cast<std::size_t>(sol.x_star.size()) != problem.n)
        throw ValidationError("build_linear_response: solution point is not classified for this problem");
    const Vector& x = sol.x_star;
    const Vector F = problem.F(x, sol.theta);
    const Matrix G = problem.G(x, sol.theta);
    const Matrix L = problem.L(x, sol.theta);

    LinearResponse lr;
    lr.Phi_prime = G;
    lr.N_matrix = L;
    lr.variable_names = problem.variable_names;
    lr.parameter_names = problem.parameter_names;
    for (std::size_t i = 0; i < problem.n; ++i) {
        if (!problem.cone.is_nonneg(i)) continue;
        const auto k = static_cast<Eigen::Index>(i);
        if (sol.is_weak(i)) {
            lr.Phi_prime.row(k).setZero();
            lr.N_matrix.row(k).setZero();
            lr.weak_indices.push_back(i);
            continue;
        }
        const double da = psi.psi_a(x[k], F[k]);
        const double db = psi.psi_b(x[k], F[k]);
        lr.Phi_prime.row(k) *= db;
        lr.Phi_prime(k, k) += da;
        lr.N_matrix.row(k) *= db;
    }

    const auto n = static_cast<Eigen::Index>(problem.n);
    bool done = false;
    if (lr.weak_indices.empty()) {
        Eigen::PartialPivLU<Matrix> lu(lr.Phi_prime);
        if (lu.rcond() > std::numeric_limits<double>::epsilon() * static_cast<double>(n)) {
            lr.T = lu.solve(lr.N_matrix);
            lr.rank_Phi = n;
            done = lr.T.allFinite();
        }
    }
    if (!done) {
        lr.T = pinv_solve(lr.Phi_prime, lr.N_matrix, &lr.rank_Phi);
        lr.used_pseudoinverse = true;
    }

    const Vector s = Eigen::BDCSVD<Matrix>(lr.Phi_prime).singularValues();
    const double smax = s.size() ? s[0] : 0.0;
    const double cutoff = std::numeric_limits<double>::epsilon() * static_cast<double>(n) * smax;
    double smin = 0.0;
    for (Eigen::Index k = 0; k < s.size(); ++k)
        if (s[k] > cutoff) smin = s[k];
    lr.kappa_H = smin > 0.0 ? (smax / smin) * (smax / smin) : std::numeric_limits<double>::infinity();
    return lr;
}

/// Symmetric positive semidefinite parameter covariance with labels.
class CovarianceModel {
public:
    CovarianceModel() = default;

    explicit CovarianceModel(Matrix C, std::vector<std::string> labels = {})
        : C_(std::move(C)), labels_(std::move(labels)) {
        validate();
    }

    static CovarianceModel diagonal(const Vector& variances, std::vector<std::string> labels = {}) {
        return CovarianceModel(Matrix(variances.asDiagonal()), std::move(labels));
    }

    /// Independent parameters with standard deviation cv * |theta_d|.
    static CovarianceModel from_cv(const Vector& theta, double cv, std::vector<std::string> labels = {}) {
        if (!(cv >= 0.0)) throw ValidationError("CovarianceModel::from_cv: cv must be nonnegative");
        return diagonal((cv * theta.cwiseAbs()).array().square().matrix(), std::move(labels));
    }

    static CovarianceModel block_diagonal(const std::vector<CovarianceModel>& blocks) {
        Eigen::Index total = 0;
        for (const auto& b : blocks) total += b.dim();
        Matrix C = Matrix::Zero(total, total);
        std::vector<std::string> labels;
        Eigen::Index at = 0;
        for (const auto& b : blocks) {
            C.block(at, at, b.dim(), b.dim()) = b.matrix();
            for (Eigen::Index k = 0; k < b.dim(); ++k) labels.push_back(b.label(static_cast<std::size_t>(k)));
            at += b.dim();
        }
        return CovarianceModel(std::move(C), std::move(labels));
    }

    Eigen::Index dim() const noexcept { return C_.rows(); }
    const Matrix& matrix() const noexcept { return C_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::string label(std::size_t d) const { return d < labels_.size() ? labels_[d] : "theta" + std::to_string(d); }

    /// Sets the correlation between parameters i and j from their variances.
    CovarianceModel with_correlation(Eigen::Index i, Eigen::Index j, double rho) const {
        if (std::abs(rho) > 1.0) throw ValidationError("CovarianceModel: correlation outside [-1, 1]");
        Matrix C = C_;
        C(i, j) = C(j, i) = rho * std::sqrt(C(i, i) * C(j, j));
        return CovarianceModel(std::move(C), labels_);
    }

    /// Multiplies the variance of every listed parameter by factor.
    CovarianceModel with_scaled_variance(const std::vector<Eigen::Index>& indices, double factor) const {
        if (!(factor >= 0.0)) throw ValidationError("CovarianceModel: variance factor must be nonnegative");
        Vector scale = Vector::Ones(dim());
        for (Eigen::Index i : indices) scale[i] = std::sqrt(factor);
        return CovarianceModel(scale.asDiagonal() * C_ * scale.asDiagonal(), labels_);
    }

    /// Copy with cross-covariance between two index sets.
    CovarianceModel with_cross_block(const std::vector<Eigen::Index>& rows, const std::vector<Eigen::Index>& cols,
                                     const Matrix& block) const {
        Matrix C = C_;
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < cols.size(); ++c)
                C(rows[r], cols[c]) = C(cols[c], rows[r]) = block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        return CovarianceModel(std::move(C), labels_);
    }

private:
    Matrix C_;
    std::vector<std::string> labels_;

    void validate() const {
        if (C_.rows() != C_.cols()) throw ShapeError("CovarianceModel: matrix is not square");
        if (!labels_.empty() && static_cast<Eigen::Index>(labels_.size()) != C_.rows())
            throw ShapeError("CovarianceModel: label count differs from dimension");
        if (!C_.allFinite()) throw ValidationError("CovarianceModel: non-finite entry");
        const double scale = std::max(1.0, C_.cwiseAbs().maxCoeff());
        if ((C_ - C_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw ValidationError("CovarianceModel: matrix is not symmetric");
        if (C_.rows() == 0) return;
        const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(C_, Eigen::EigenvaluesOnly).eigenvalues();
        const double floor = -1e-10 * std::max(C_.trace(), std::numeric_limits<double>::min());
        if (ev.minCoeff() < floor) {
            throw ValidationError("CovarianceModel: matrix is not positive semidefinite (smallest eigenvalue " +
                                  std::to_string(ev.minCoeff()) + ", largest " + std::to_string(ev.maxCoeff()) + ")");
        }
    }
};

/// sigma = cv * mean(mu); Cov(theta(t_i), theta(t_j)) = sigma^2 min(t_i, t_j).
inline CovarianceModel wiener_covariance(const Vector& mu, double cv, const Vector& times,
                                         std::vector<std::string> labels = {}) {
    if (mu.size() != times.size()) throw ShapeError("wiener_covariance: mu and times differ in length");
    if (mu.size() == 0) throw ShapeError("wiener_covariance: empty horizon");
    if (!(cv >= 0.0)) throw ValidationError("wiener_covariance: cv must be nonnegative");
    if (!(times[0] > 0.0)) throw DomainError("wiener_covariance: horizon must start after t = 0");
    for (Eigen::Index k = 1; k < times.size(); ++k)
        if (!(times[k] > times[k - 1])) throw DomainError("wiener_covariance: times must be strictly increasing");
    const double sigma = cv * mu.mean();
    Matrix C(times.size(), times.size());
    for (Eigen::Index i = 0; i < times.size(); ++i)
        for (Eigen::Index j = 0; j < times.size(); ++j) C(i, j) = sigma * sigma * std::min(times[i], times[j]);
    return CovarianceModel(std::move(C), std::move(labels));
}

/// Euclidean norm of each column of T: S_d^2 scales an input-variance bump
/// at parameter d into the increase of the total output variance.
inline Vector sensitivity(const LinearResponse& lr) { return lr.T.colwise().norm().transpose(); }

inline double trace_uncertainty(const Matrix& C_star) {
    if (C_star.rows() != C_star.cols()) throw ShapeError("trace_uncertainty: matrix is not square");
    return C_star.trace();
}

inline double condition_diagnostic(const LinearResponse& lr) { return lr.kappa_H; }

inline constexpr double kIllConditionedThreshold = 1e8;

struct PropagationResult {
    Matrix C_star;
    Vector sensitivity;
    double kappa_H = 0.0;
    bool ill_conditioned = false;
    Eigen::Index rank_Phi = 0;
    bool used_pseudoinverse = false;
    double trace = 0.0;
};

inline PropagationResult propagate_covariance(const LinearResponse& lr, const CovarianceModel& C) {
    if (C.dim() != lr.T.cols())
        throw ShapeError("propagate_covariance: covariance is " + std::to_string(C.dim()) + "x" +
                         std::to_string(C.dim()) + ", T has " + std::to_string(lr.T.cols()) + " columns");
    PropagationResult r;
    const Matrix TC = lr.T * C.matrix();
    r.C_star = TC * lr.T.transpose();
    r.C_star = 0.5 * (r.C_star + r.C_star.transpose()).eval();
    r.sensitivity = sensitivity(lr);
    r.kappa_H = lr.kappa_H;
    r.ill_conditioned = !(lr.kappa_H <= kIllConditionedThreshold);
    r.rank_Phi = lr.rank_Phi;
    r.used_pseudoinverse = lr.used_pseudoinverse;
    r.trace = trace_uncertainty(r.C_star);
    return r;
}

/// Correlation matrix of a covariance (zero where a variance vanishes).
inline Matrix correlation(const Matrix& C) {
    const Vector sd = C.diagonal().cwiseMax(0.0).cwiseSqrt();
    Matrix R = Matrix::Zero(C.rows(), C.cols());
    for (Eigen::Index i = 0; i < C.rows(); ++i)
        for (Eigen::Index j = 0; j < C.cols(); ++j)
            if (sd[i] > 0.0 && sd[j] > 0.0) R(i, j) = C(i, j) / (sd[i] * sd[j]);
    return R;
}

struct FiniteDifferenceResult {
    Matrix T;
    std::vector<bool> column_ok;
    bool all_ok() const { return std::all_of(column_ok.begin(), column_ok.end(), [](bool b) { return b; }); }
};

/// Forward-difference estimate of T: column d = -(x*(theta + delta e_d) - x*) / delta.
/// Columns whose perturbed solve fails are left zero and flagged.
inline FiniteDifferenceResult finite_difference_T(const ParametrizedNCP& problem, const SolutionPoint& sol,
                                                  double delta, const SolverConfig& cfg = {}) {
    if (!(delta > 0.0)) throw DomainError("finite_difference_T: delta must be positive");
    FiniteDifferenceResult out;
    out.T = Matrix::Zero(static_cast<Eigen::Index>(problem.n), static_cast<Eigen::Index>(problem.m));
    std::vector<char> ok(problem.m, 0);
    parallel_for(problem.m, [&](std::size_t d) {
        Vector theta = sol.theta;
        theta[static_cast<Eigen::Index>(d)] += delta;
        const SolveReport rep = solve_perturbed(problem, theta, sol.x_star, cfg);
        if (!rep.converged) return;
        out.T.col(static_cast<Eigen::Index>(d)) = -(rep.x_star - sol.x_star) / delta;
        ok[d] = 1;
    });
    out.column_ok.assign(ok.begin(), ok.end());
    return out;
}

}  // namespace scpuq
