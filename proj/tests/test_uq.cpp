#include "scpuq/models/oligopoly.hpp"
#include "scpuq/uq.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace scpuq;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out[k++] = x;
    return out;
}

struct Duopoly {
    ParametrizedNCP problem = models::make_oligopoly(models::duopoly_config());
    SolutionPoint sol = classify_activity(problem, vec({4.0, 5.0}), problem.theta_mean);
    LinearResponse lr = build_linear_response(problem, sol);
};

Matrix duopoly_T() {
    Matrix T(2, 4);
    T << 2, -1, -1, -12, -1, 2, -1, -15;
    return T / 3.0;
}

Matrix random_psd(std::mt19937_64& rng, Eigen::Index m, Eigen::Index rank) {
    std::normal_distribution<double> z;
    Matrix B(m, rank);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < rank; ++j) B(i, j) = z(rng);
    return B * B.transpose();
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> z;
    Matrix A(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) A(i, j) = z(rng);
    return A;
}

/// Linear NCP F = M x + L theta on the nonnegative orthant with a prescribed
/// solution: x = x0 on the support, F = f0 off it (complementary by design).
ParametrizedNCP planted_lcp(const Matrix& M, const Matrix& L, const Vector& x0, const Vector& f0) {
    const auto n = M.rows();
    ParametrizedNCP p;
    p.n = static_cast<std::size_t>(n);
    p.m = static_cast<std::size_t>(L.cols());
    p.cone = ConeSpec::nonnegative_orthant(p.n);
    // theta_mean solves L theta = f0 - M x0 in the least-squares sense; we
    // instead absorb the offset into a constant so theta_mean = 0.
    const Vector offset = f0 - M * x0;
    p.theta_mean = Vector::Zero(L.cols());
    p.eval_F = [M, L, offset](const Vector& x, const Vector& th) { return Vector(M * x + L * th + offset); };
    p.eval_G = [M](const Vector&, const Vector&) { return M; };
    p.eval_L = [L](const Vector&, const Vector&) { return L; };
    return p;
}

}  // namespace

TEST(LinearResponse, DuopolyMatrices) {
    Duopoly d;
    Matrix Phi(2, 2);
    Phi << 2, 1, 1, 2;
    Matrix N(2, 4);
    N << 1, 0, -1, -13, 0, 1, -1, -14;
    EXPECT_LT((d.lr.Phi_prime - Phi).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((d.lr.N_matrix - N).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((d.lr.T - duopoly_T()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_FALSE(d.lr.used_pseudoinverse);
    EXPECT_EQ(d.lr.rank_Phi, 2);
}

TEST(LinearResponse, FischerBurmeisterGivesSameT) {
    Duopoly d;
    const LinearResponse fb = build_linear_response(d.problem, d.sol, CFunction::fischer_burmeister());
    EXPECT_LT((fb.T - d.lr.T).cwiseAbs().maxCoeff(), 1e-12);
    // FB rows are the min rows scaled by -1
    EXPECT_LT((fb.Phi_prime + d.lr.Phi_prime).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LinearResponse, IdentityResponse) {
    // F = x + theta with every index strong-F at x = 0, theta = 1.
    ParametrizedNCP p;
    p.n = 3;
    p.m = 3;
    p.cone = ConeSpec::nonnegative_orthant(3);
    p.theta_mean = Vector::Ones(3);
    p.eval_F = [](const Vector& x, const Vector& th) { return Vector(x + th); };
    p.eval_G = [](const Vector&, const Vector&) { return Matrix(Matrix::Identity(3, 3)); };
    p.eval_L = [](const Vector&, const Vector&) { return Matrix(Matrix::Identity(3, 3)); };
    const SolutionPoint s = classify_activity(p, Vector::Zero(3), p.theta_mean);
    const LinearResponse lr = build_linear_response(p, s);
    // strong-F rows: psi_min picks x, so Phi' = I and N = 0
    EXPECT_EQ(lr.Phi_prime, Matrix(Matrix::Identity(3, 3)));
    EXPECT_EQ(lr.T, Matrix(Matrix::Zero(3, 3)));
    EXPECT_DOUBLE_EQ(lr.kappa_H, 1.0);
}

TEST(LinearResponse, IdentityResponseStrongX) {
    // F = x + theta at theta = -1: x = 1, every index strong-x, so Phi' = G = I and N = L = I.
    ParametrizedNCP p;
    p.n = 3;
    p.m = 3;
    p.cone = ConeSpec::nonnegative_orthant(3);
    p.theta_mean = -Vector::Ones(3);
    p.eval_F = [](const Vector& x, const Vector& th) { return Vector(x + th); };
    p.eval_G = [](const Vector&, const Vector&) { return Matrix(Matrix::Identity(3, 3)); };
    p.eval_L = [](const Vector&, const Vector&) { return Matrix(Matrix::Identity(3, 3)); };
    const SolutionPoint s = classify_activity(p, Vector::Ones(3), p.theta_mean);
    EXPECT_EQ(build_linear_response(p, s).T, Matrix(Matrix::Identity(3, 3)));
}

TEST(LinearResponse, UnclassifiedPointRejected) {
    Duopoly d;
    SolutionPoint bad = d.sol;
    bad.activity.pop_back();
    EXPECT_THROW(build_linear_response(d.problem, bad), ValidationError);
}

TEST(Condition, DuopolyKappaIsNine) {
    Duopoly d;
    EXPECT_NEAR(condition_diagnostic(d.lr), 9.0, 1e-10);
}

TEST(Condition, ZeroRowsExcluded) {
    // x = 0, F = 0 on index 0 makes it weak; Phi' keeps a zero row.
    ParametrizedNCP p;
    p.n = 3;
    p.m = 1;
    p.cone = ConeSpec::nonnegative_orthant(3);
    p.theta_mean = vec({0.0});
    Matrix M(3, 3);
    M << 2, 0, 0, 0, 3, 1, 0, 1, 4;
    p.eval_F = [M](const Vector& x, const Vector& th) { return Vector(M * x + vec({th[0], 1.0, 2.0})); };
    p.eval_G = [M](const Vector&, const Vector&) { return M; };
    p.eval_L = [](const Vector&, const Vector&) { return Matrix(Matrix::Constant(3, 1, 1.0)); };
    const SolutionPoint s = classify_activity(p, Vector::Zero(3), p.theta_mean, 1e-9);
    EXPECT_EQ(s.weak_set(), std::vector<std::size_t>{0});
    const LinearResponse lr = build_linear_response(p, s);
    EXPECT_TRUE(lr.used_pseudoinverse);
    EXPECT_EQ(lr.rank_Phi, 2);
    EXPECT_EQ(lr.Phi_prime.row(0).norm(), 0.0);
    EXPECT_EQ(lr.N_matrix.row(0).norm(), 0.0);
    // rows 1, 2 are strong-F: Phi' rows are unit vectors, so nonzero singular values are 1, 1
    EXPECT_TRUE(std::isfinite(lr.kappa_H));
    EXPECT_NEAR(lr.kappa_H, 1.0, 1e-12);
}

TEST(Propagation, DuopolyScenarioOne) {
    Duopoly d;
    const CovarianceModel C1 = CovarianceModel::diagonal(vec({0.04, 0.01, 2.25, 0.01}));
    const PropagationResult r = propagate_covariance(d.lr, C1);
    EXPECT_NEAR(r.C_star(0, 0), 0.4289, 1e-4);
    EXPECT_NEAR(r.C_star(0, 1), 0.4389, 1e-4);
    EXPECT_NEAR(r.C_star(1, 1), 0.5089, 1e-4);
    EXPECT_NEAR(correlation(r.C_star)(0, 1), 0.94, 0.01);
    EXPECT_NEAR(r.trace, 0.9378, 1e-4);
    const CovarianceModel from_cv = CovarianceModel::from_cv(d.problem.theta_mean, 0.1);
    EXPECT_LT((from_cv.matrix() - C1.matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Propagation, DuopolyCostOnly) {
    Duopoly d;
    const CovarianceModel C2 = CovarianceModel::diagonal(vec({0.04, 0.01, 0.0, 0.0}));
    const PropagationResult r = propagate_covariance(d.lr, C2);
    EXPECT_NEAR(correlation(r.C_star)(0, 1), -0.857, 0.005);
    EXPECT_NEAR(std::sqrt(r.C_star(0, 0)), 0.137, 1e-3);
    EXPECT_NEAR(std::sqrt(r.C_star(1, 1)), 0.094, 1e-3);

    // Cov(gamma_1, gamma_2) = 0.6 * 0.2 * 0.1 = 0.012, so C* = (1/9) [[0.122, -0.04], [-0.04, 0.032]]
    const PropagationResult c = propagate_covariance(d.lr, C2.with_correlation(0, 1, 0.6));
    EXPECT_NEAR(c.C_star(0, 0), 0.122 / 9.0, 1e-15);
    EXPECT_NEAR(c.C_star(0, 1), -0.04 / 9.0, 1e-15);
    EXPECT_NEAR(c.C_star(1, 1), 0.032 / 9.0, 1e-15);
    EXPECT_NEAR(correlation(c.C_star)(0, 1), -0.04 / std::sqrt(0.122 * 0.032), 1e-12);
    EXPECT_NEAR(std::sqrt(c.C_star(0, 0)) / 4.0, 0.029, 1e-3);
    EXPECT_NEAR(std::sqrt(c.C_star(1, 1)) / 5.0, 0.012, 1e-3);
}

TEST(Propagation, ZeroCovariance) {
    Duopoly d;
    const PropagationResult r = propagate_covariance(d.lr, CovarianceModel::diagonal(Vector::Zero(4)));
    EXPECT_EQ(r.C_star, Matrix(Matrix::Zero(2, 2)));
    EXPECT_EQ(r.sensitivity, sensitivity(d.lr));
}

TEST(Propagation, ShapeAndPsdChecks) {
    Duopoly d;
    EXPECT_THROW(propagate_covariance(d.lr, CovarianceModel::diagonal(Vector::Ones(3))), ShapeError);
    EXPECT_THROW(CovarianceModel::diagonal(vec({1.0, -1.0})), ValidationError);
    Matrix asym(2, 2);
    asym << 1, 0.5, 0.4, 1;
    EXPECT_THROW(CovarianceModel{asym}, ValidationError);
    EXPECT_THROW(CovarianceModel::diagonal(vec({1.0, 1.0})).with_correlation(0, 1, 1.5), ValidationError);
    EXPECT_THROW(CovarianceModel::from_cv(vec({1.0}), -0.1), ValidationError);
}

TEST(Sensitivity, DuopolyVector) {
    Duopoly d;
    const Vector S = sensitivity(d.lr);
    EXPECT_NEAR(S[0], std::sqrt(5.0) / 3.0, 1e-12);
    EXPECT_NEAR(S[1], std::sqrt(5.0) / 3.0, 1e-12);
    EXPECT_NEAR(S[2], std::sqrt(2.0) / 3.0, 1e-12);
    EXPECT_NEAR(S[3], std::sqrt(369.0) / 3.0, 1e-12);
    EXPECT_NEAR(S[0], 0.745, 5e-3);
    EXPECT_NEAR(S[2], 0.471, 5e-3);
    EXPECT_NEAR(S[3], 6.40, 5e-3);
}

TEST(Sensitivity, VarianceBumpOnSlope) {
    Duopoly d;
    const CovarianceModel C1 = CovarianceModel::diagonal(vec({0.04, 0.01, 2.25, 0.01}));
    const double eps = 1e-3;
    const double base = propagate_covariance(d.lr, C1).trace;
    const double bumped = propagate_covariance(d.lr, CovarianceModel::diagonal(vec({0.04, 0.01, 2.25, 0.01 + eps}))).trace;
    EXPECT_NEAR((bumped - base) / eps, 41.0, 41.0 * 1e-9);
}

TEST(Sensitivity, ZeroColumn) {
    LinearResponse lr;
    lr.T = Matrix::Zero(3, 2);
    lr.T(0, 0) = 3.0;
    lr.T(2, 0) = 4.0;
    const Vector S = sensitivity(lr);
    EXPECT_DOUBLE_EQ(S[0], 5.0);
    EXPECT_EQ(S[1], 0.0);
}

TEST(Trace, Basics) {
    EXPECT_EQ(trace_uncertainty(Matrix::Identity(3, 3)), 3.0);
    EXPECT_THROW(trace_uncertainty(Matrix::Zero(2, 3)), ShapeError);
}

TEST(TraceProperty, OrthogonalInvariance) {
    std::mt19937_64 rng(41);
    for (int t = 0; t < 50; ++t) {
        const Matrix C = random_psd(rng, 5, 5);
        const Matrix Q = Eigen::HouseholderQR<Matrix>(random_matrix(rng, 5, 5)).householderQ();
        EXPECT_NEAR(trace_uncertainty(Q * C * Q.transpose()), trace_uncertainty(C), 1e-10 * std::max(1.0, C.trace()));
    }
}

TEST(Wiener, ZeroCv) {
    const CovarianceModel C = wiener_covariance(vec({10, 10, 10}), 0.0, vec({1, 2, 3}));
    EXPECT_EQ(C.matrix(), Matrix(Matrix::Zero(3, 3)));
}

TEST(Wiener, BrownianBlock) {
    const CovarianceModel C = wiener_covariance(vec({10, 10, 10}), 0.01, vec({1, 2, 3}));
    Matrix expected(3, 3);
    expected << 1, 1, 1, 1, 2, 2, 1, 2, 3;
    EXPECT_LT((C.matrix() - 0.01 * expected).cwiseAbs().maxCoeff(), 1e-15);
    // sigma uses the mean over the horizon
    const CovarianceModel D = wiener_covariance(vec({5, 15}), 0.1, vec({1, 2}));
    EXPECT_NEAR(D.matrix()(1, 1), 2.0, 1e-12);
}

TEST(Wiener, Errors) {
    EXPECT_THROW(wiener_covariance(vec({1, 1}), 0.1, vec({0, 1})), DomainError);
    EXPECT_THROW(wiener_covariance(vec({1, 1}), 0.1, vec({2, 1})), DomainError);
    EXPECT_THROW(wiener_covariance(vec({1}), 0.1, vec({1, 2})), ShapeError);
    EXPECT_THROW(wiener_covariance(Vector(0), 0.1, Vector(0)), ShapeError);
}

TEST(Wiener, ScaledRegionVariance) {
    // One region's block at five times the variance of the others.
    const CovarianceModel a = wiener_covariance(vec({10, 12}), 0.01, vec({1, 2}), {"a1", "a2"});
    const CovarianceModel b = wiener_covariance(vec({10, 12}), 0.01, vec({1, 2}), {"b1", "b2"});
    const CovarianceModel C = CovarianceModel::block_diagonal({a, b}).with_scaled_variance({2, 3}, 5.0);
    EXPECT_NEAR(C.matrix().block(2, 2, 2, 2).sum(), 5.0 * C.matrix().block(0, 0, 2, 2).sum(), 1e-12);
    EXPECT_EQ(C.matrix().block(0, 2, 2, 2).norm(), 0.0);
    EXPECT_EQ(C.label(2), "b1");
}

TEST(FiniteDifference, DuopolyMatchesT) {
    Duopoly d;
    for (double delta : {1e-4, 1e-5}) {
        const FiniteDifferenceResult fd = finite_difference_T(d.problem, d.sol, delta);
        ASSERT_TRUE(fd.all_ok());
        EXPECT_LT((fd.T - d.lr.T).cwiseAbs().maxCoeff(), 1e-3 * d.lr.T.cwiseAbs().maxCoeff());
    }
    EXPECT_THROW(finite_difference_T(d.problem, d.sol, 0.0), DomainError);
}

TEST(FiniteDifference, RichardsonStable) {
    // Nonlinear scalar problem x = theta^2 (interior): F = x - theta^2.
    ParametrizedNCP p;
    p.n = 1;
    p.m = 1;
    p.cone = ConeSpec::nonnegative_orthant(1);
    p.theta_mean = vec({2.0});
    p.eval_F = [](const Vector& x, const Vector& th) { return vec({x[0] - th[0] * th[0]}); };
    p.eval_G = [](const Vector&, const Vector&) { return Matrix(Matrix::Identity(1, 1)); };
    p.eval_L = [](const Vector&, const Vector& th) { return Matrix(Matrix::Constant(1, 1, -2.0 * th[0])); };
    const SolutionPoint s = classify_activity(p, vec({4.0}), p.theta_mean);
    const LinearResponse lr = build_linear_response(p, s);
    const double t1 = finite_difference_T(p, s, 1e-4).T(0, 0);
    const double t2 = finite_difference_T(p, s, 1e-5).T(0, 0);
    // forward differences carry an O(delta) error; two-step extrapolation removes it
    const double richardson = (10.0 * t2 - t1) / 9.0;
    EXPECT_NEAR(lr.T(0, 0), -4.0, 1e-12);
    EXPECT_NEAR(t1, -4.0, 2e-4);
    EXPECT_NEAR(richardson, -4.0, 1e-7);
}

TEST(FiniteDifference, LinearProblemIsExact) {
    std::mt19937_64 rng(42);
    const Matrix B = random_matrix(rng, 4, 4);
    const Matrix M = B * B.transpose() + Matrix::Identity(4, 4);
    const Matrix L = random_matrix(rng, 4, 3);
    const ParametrizedNCP p = planted_lcp(M, L, vec({1, 2, 3, 4}), Vector::Zero(4));
    const SolutionPoint s = classify_activity(p, vec({1, 2, 3, 4}), p.theta_mean);
    const LinearResponse lr = build_linear_response(p, s);
    const FiniteDifferenceResult fd = finite_difference_T(p, s, 1e-3);
    EXPECT_LT((fd.T - lr.T).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PropagationProperty, SymmetricPsdOverRandomInputs) {
    std::mt19937_64 rng(43);
    std::uniform_int_distribution<int> dim(1, 20);
    for (int t = 0; t < 100; ++t) {
        const int n = dim(rng), m = dim(rng);
        LinearResponse lr;
        lr.T = random_matrix(rng, n, m);
        const CovarianceModel C(random_psd(rng, m, 1 + t % m));
        const Matrix Cs = propagate_covariance(lr, C).C_star;
        EXPECT_EQ((Cs - Cs.transpose()).cwiseAbs().maxCoeff(), 0.0);
        const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(Cs).eigenvalues();
        EXPECT_GE(ev.minCoeff(), -1e-10 * std::max(1.0, Cs.trace()));
    }
}

TEST(PropagationProperty, ScenarioIndependence) {
    Duopoly d;
    std::mt19937_64 rng(44);
    for (int t = 0; t < 20; ++t) {
        const CovarianceModel C(random_psd(rng, 4, 4));
        const LinearResponse fresh = build_linear_response(d.problem, d.sol);
        EXPECT_EQ(propagate_covariance(d.lr, C).C_star, propagate_covariance(fresh, C).C_star);
    }
}

TEST(PropagationProperty, TraceBumpEqualsWeightedSensitivity) {
    std::mt19937_64 rng(45);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        LinearResponse lr;
        lr.T = random_matrix(rng, 6, 5);
        const CovarianceModel C(random_psd(rng, 5, 5));
        Vector bump(5);
        for (int k = 0; k < 5; ++k) bump[k] = u(rng);
        const CovarianceModel C2(C.matrix() + Matrix(bump.asDiagonal()));
        const double delta = propagate_covariance(lr, C2).trace - propagate_covariance(lr, C).trace;
        const Vector S = sensitivity(lr);
        EXPECT_NEAR(delta, S.cwiseProduct(S).dot(bump), 1e-10 * std::max(1.0, std::abs(delta)));
    }
}

TEST(LinearResponseProperty, MinAndFbAgreeWhenStrictlyComplementary) {
    std::mt19937_64 rng(46);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    for (int t = 0; t < 50; ++t) {
        const int n = 2 + t % 7;
        const Matrix B = random_matrix(rng, n, n);
        const Matrix M = B * B.transpose() + Matrix::Identity(n, n);
        const Matrix L = random_matrix(rng, n, 3);
        Vector x0 = Vector::Zero(n), f0 = Vector::Zero(n);
        for (int i = 0; i < n; ++i) (i % 2 ? f0[i] : x0[i]) = u(rng);
        const ParametrizedNCP p = planted_lcp(M, L, x0, f0);
        const SolutionPoint s = classify_activity(p, x0, p.theta_mean);
        ASSERT_TRUE(s.weak_set().empty());
        const Matrix Tmin = build_linear_response(p, s, CFunction::min()).T;
        const Matrix Tfb = build_linear_response(p, s, CFunction::fischer_burmeister()).T;
        EXPECT_LT((Tmin - Tfb).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, Tmin.cwiseAbs().maxCoeff()));
    }
}

TEST(PinvProperty, MinimumNormOnRankDeficientSystems) {
    std::mt19937_64 rng(47);
    for (int t = 0; t < 50; ++t) {
        const int rank = 1 + t % 4;
        const Matrix A = random_matrix(rng, 5, rank) * random_matrix(rng, rank, 5);
        const Matrix B = random_matrix(rng, 5, 3);
        Eigen::Index r = 0;
        const Matrix X = pinv_solve(A, B, &r);
        EXPECT_EQ(r, rank);
        // oracle: complete orthogonal decomposition gives the min-norm least-squares solution
        const Matrix oracle = A.completeOrthogonalDecomposition().pseudoInverse() * B;
        EXPECT_LT((X - oracle).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, oracle.cwiseAbs().maxCoeff()));
        // least squares: residual orthogonal to range(A)
        EXPECT_LT((A.transpose() * (A * X - B)).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, A.norm() * B.norm()));
        // minimum norm: X lies in row space of A, so adding any null vector grows it
        const Eigen::FullPivLU<Matrix> lu(A);
        const Matrix K = lu.kernel();
        const Matrix Xp = X + K * random_matrix(rng, K.cols(), 3);
        EXPECT_LE(X.norm(), Xp.norm() + 1e-12);
        EXPECT_LT((K.transpose() * X).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, X.norm()));
    }
}

TEST(LinearResponse, WeakIndexUsesMinNormT) {
    // Weak index 0: x0 = F0 = 0; rows 1,2 strong-x.
    Matrix M(3, 3);
    M << 2, 1, 0, 1, 3, 1, 0, 1, 4;
    Matrix L(3, 2);
    L << 1, 0, 0, 1, 1, 1;
    const ParametrizedNCP p = planted_lcp(M, L, vec({0, 1, 2}), Vector::Zero(3));
    const SolutionPoint s = classify_activity(p, vec({0, 1, 2}), p.theta_mean, 1e-9);
    ASSERT_EQ(s.weak_set(), std::vector<std::size_t>{0});
    const LinearResponse lr = build_linear_response(p, s);
    EXPECT_TRUE(lr.used_pseudoinverse);
    Matrix Phi = M;
    Phi.row(0).setZero();
    Matrix N = L;
    N.row(0).setZero();
    const Matrix oracle = Phi.completeOrthogonalDecomposition().pseudoInverse() * N;
    EXPECT_LT((lr.T - oracle).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(lr.weak_indices, std::vector<std::size_t>{0});
}
