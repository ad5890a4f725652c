#pragma once

// Covariance propagation for
//     minimize g(x) + c(theta)^T x   subject to  A x = b(theta)   (duals y)
// with g strictly convex. Differentiating the KKT system
//     grad g(x) + c(theta) + A^T y = 0,   A x = b(theta)
// gives [H A^T; A 0] [dx; dy] = [-dc/dtheta; db/dtheta] dtheta, so the
// stacked response is T = K^{-1} [-dc/dtheta; db/dtheta] with d(x,y) = T dtheta.

#include "scpuq/error.hpp"
#include "scpuq/mc.hpp"
#include "scpuq/ncp.hpp"
#include "scpuq/uq.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace scpuq {

struct EqConstrainedProgram {
    std::size_t n = 0;  ///< primal dimension
    std::size_t p = 0;  ///< equality constraints
    std::size_t m = 0;  ///< parameters
    std::function<Vector(const Vector&)> grad_g;
    std::function<Matrix(const Vector&)> hess_g;
    std::function<Vector(const Vector&)> c_of_theta;
    std::function<Matrix(const Vector&)> jac_c;  ///< n x m
    Matrix A;                                    ///< p x n
    std::function<Vector(const Vector&)> b_of_theta;
    std::function<Matrix(const Vector&)> jac_b;  ///< p x m
    Vector theta_mean;
};

struct KktResponse {
    LinearResponse response;  ///< T over the stacked (x, y), with d(x,y) = T dtheta
    Matrix kkt_matrix;
    double stationarity_residual = 0.0;
    double feasibility_residual = 0.0;
};

namespace detail {

inline Matrix kkt_matrix(const Matrix& H, const Matrix& A) {
    const auto n = H.rows();
    const auto p = A.rows();
    Matrix K = Matrix::Zero(n + p, n + p);
    K.topLeftCorner(n, n) = H;
    if (p > 0) {
        K.topRightCorner(n, p) = A.transpose();
        K.bottomLeftCorner(p, n) = A;
    }
    return K;
}

/// Symmetric indefinite solve with an LU fallback when the pivoted LDL^T
/// factorization does not reproduce the right-hand side.
inline Matrix kkt_solve(const Matrix& K, const Matrix& rhs) {
    const double tol = 1e-10 * std::max(1.0, K.cwiseAbs().maxCoeff()) * std::max(1.0, rhs.cwiseAbs().maxCoeff());
    Eigen::LDLT<Matrix> ldlt(K);
    if (ldlt.info() == Eigen::Success) {
        Matrix X = ldlt.solve(rhs);
        if (X.allFinite() && (K * X - rhs).cwiseAbs().maxCoeff() <= tol) return X;
    }
    return Eigen::PartialPivLU<Matrix>(K).solve(rhs);
}

}  // namespace detail

inline KktResponse kkt_linear_response(const EqConstrainedProgram& prog, const Vector& x_star, const Vector& y_star,
                                       const Vector& theta, double kkt_tol = 1e-8) {
    const auto n = static_cast<Eigen::Index>(prog.n);
    const auto p = static_cast<Eigen::Index>(prog.p);
    const auto m = static_cast<Eigen::Index>(prog.m);
    if (x_star.size() != n || y_star.size() != p || theta.size() != m)
        throw ShapeError("kkt_linear_response: argument sizes do not match the program");
    if (prog.A.rows() != p || prog.A.cols() != n) throw ShapeError("kkt_linear_response: A has wrong shape");

    KktResponse out;
    const Vector c = prog.c_of_theta(theta);
    Vector stat = prog.grad_g(x_star) + c;
    if (p > 0) stat += prog.A.transpose() * y_star;
    out.stationarity_residual = stat.cwiseAbs().maxCoeff();
    out.feasibility_residual = p > 0 ? (prog.A * x_star - prog.b_of_theta(theta)).cwiseAbs().maxCoeff() : 0.0;
    if (out.stationarity_residual > kkt_tol || out.feasibility_residual > kkt_tol) {
        throw ValidationError("kkt_linear_response: KKT residuals (" + std::to_string(out.stationarity_residual) + ", " +
                              std::to_string(out.feasibility_residual) + ") exceed tolerance");
    }

    const Matrix H = prog.hess_g(x_star);
    if (Eigen::LLT<Matrix>(H).info() != Eigen::Success)
        throw RankError("kkt_linear_response: Hessian of g is not positive definite (strict convexity fails)");
    if (p > 0) {
        Eigen::ColPivHouseholderQR<Matrix> qr(prog.A.transpose());
        if (qr.rank() < p) throw RankError("kkt_linear_response: A is row-rank deficient (LICQ fails)");
    }

    out.kkt_matrix = detail::kkt_matrix(H, prog.A);
    Matrix rhs(n + p, m);
    rhs.topRows(n) = -prog.jac_c(theta);
    if (p > 0) rhs.bottomRows(p) = prog.jac_b(theta);

    LinearResponse& lr = out.response;
    lr.T = detail::kkt_solve(out.kkt_matrix, rhs);
    lr.Phi_prime = out.kkt_matrix;
    lr.N_matrix = rhs;
    lr.rank_Phi = n + p;
    const Vector s = Eigen::BDCSVD<Matrix>(out.kkt_matrix).singularValues();
    lr.kappa_H = (s[0] / s[s.size() - 1]) * (s[0] / s[s.size() - 1]);
    for (Eigen::Index i = 0; i < n; ++i) lr.variable_names.push_back("x" + std::to_string(i));
    for (Eigen::Index j = 0; j < p; ++j) lr.variable_names.push_back("y" + std::to_string(j));
    return out;
}

struct QpExactnessReport {
    Matrix exact;           ///< G^{-1} C G^{-T}, from an independent Cholesky route
    Matrix propagated;      ///< T C T^T through kkt_linear_response
    Matrix empirical;       ///< sample covariance of x*(theta) = -G^{-1} theta
    Matrix standard_error;  ///< Gaussian standard error of each empirical entry
    double analytic_deviation = 0.0;  ///< max |propagated - exact|
    double max_abs_deviation = 0.0;   ///< max |empirical - exact|
    double max_z_score = 0.0;         ///< max |empirical - exact| / standard_error
    std::size_t samples = 0;
};

/// Unconstrained quadratic f = 0.5 x^T G x + theta^T x: the first-order
/// covariance is exact. Compares it with Monte-Carlo on the closed-form
/// solution map.
inline QpExactnessReport verify_qp_exactness(const Matrix& G, const CovarianceModel& C, std::size_t samples,
                                             std::uint64_t seed) {
    const auto n = G.rows();
    if (G.cols() != n || C.dim() != n) throw ShapeError("verify_qp_exactness: dimension mismatch");
    const Eigen::LLT<Matrix> llt(G);
    if (llt.info() != Eigen::Success) throw ValidationError("verify_qp_exactness: G is not positive definite");

    EqConstrainedProgram prog;
    prog.n = static_cast<std::size_t>(n);
    prog.m = static_cast<std::size_t>(n);
    prog.grad_g = [G](const Vector& x) { return Vector(G * x); };
    prog.hess_g = [G](const Vector&) { return G; };
    prog.c_of_theta = [](const Vector& th) { return th; };
    prog.jac_c = [n](const Vector&) { return Matrix(Matrix::Identity(n, n)); };
    prog.A = Matrix::Zero(0, n);
    prog.b_of_theta = [](const Vector&) { return Vector(0); };
    prog.jac_b = [n](const Vector&) { return Matrix(Matrix::Zero(0, n)); };
    prog.theta_mean = Vector::Zero(n);

    QpExactnessReport r;
    const Vector x0 = Vector::Zero(n);
    const KktResponse kkt = kkt_linear_response(prog, x0, Vector(0), prog.theta_mean);
    r.propagated = propagate_covariance(kkt.response, C).C_star;
    const Matrix Ginv = llt.solve(Matrix::Identity(n, n));
    r.exact = Ginv * C.matrix() * Ginv.transpose();
    r.analytic_deviation = (r.propagated - r.exact).cwiseAbs().maxCoeff();

    SamplingPlan plan;
    plan.n_samples = samples;
    plan.scheme = SamplingScheme::Plain;
    plan.seed = seed;
    const Matrix thetas = sample_parameters(C, prog.theta_mean, plan);
    Matrix xs(thetas.rows(), n);
    for (Eigen::Index s = 0; s < thetas.rows(); ++s) xs.row(s) = -llt.solve(Vector(thetas.row(s).transpose())).transpose();
    r.empirical = empirical_covariance(xs);
    r.samples = samples;
    r.standard_error = Matrix(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            r.standard_error(i, j) =
                std::sqrt((r.exact(i, i) * r.exact(j, j) + r.exact(i, j) * r.exact(i, j)) / static_cast<double>(samples - 1));
    const Matrix dev = (r.empirical - r.exact).cwiseAbs();
    r.max_abs_deviation = dev.maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (r.standard_error(i, j) > 0.0) r.max_z_score = std::max(r.max_z_score, dev(i, j) / r.standard_error(i, j));
    return r;
}

}  // namespace scpuq
