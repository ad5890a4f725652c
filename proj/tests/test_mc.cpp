#include "scpuq/mc.hpp"
#include "scpuq/models/oligopoly.hpp"

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

/// x(theta) = theta: F = x - theta on a free cone.
ParametrizedNCP identity_map(std::size_t m) {
    const auto k = static_cast<Eigen::Index>(m);
    ParametrizedNCP p;
    p.n = m;
    p.m = m;
    p.cone = ConeSpec(m, {});
    p.theta_mean = Vector::LinSpaced(k, 1.0, static_cast<double>(m));
    p.eval_F = [](const Vector& x, const Vector& th) { return Vector(x - th); };
    p.eval_G = [k](const Vector&, const Vector&) { return Matrix(Matrix::Identity(k, k)); };
    p.eval_L = [k](const Vector&, const Vector&) { return Matrix(-Matrix::Identity(k, k)); };
    return p;
}

const CovarianceModel& duopoly_c1() {
    static const CovarianceModel C = CovarianceModel::diagonal(vec({0.04, 0.01, 2.25, 0.01}));
    return C;
}

}  // namespace

TEST(SampleCount, BenchmarkRule) {
    EXPECT_EQ(benchmark_sample_count(4), 100u);
    EXPECT_EQ(benchmark_sample_count(10), 103u);
    EXPECT_EQ(benchmark_sample_count(15), 3277u);
    EXPECT_EQ(benchmark_sample_count(20), 104858u);
}

TEST(Sampling, ZeroCovarianceGivesMean) {
    const Vector mean = vec({1.0, -2.0, 3.0});
    SamplingPlan plan;
    plan.n_samples = 10;
    const Matrix s = sample_parameters(CovarianceModel::diagonal(Vector::Zero(3)), mean, plan);
    for (Eigen::Index r = 0; r < s.rows(); ++r) EXPECT_EQ(Vector(s.row(r).transpose()), mean);
}

TEST(Sampling, StratumBalance) {
    SamplingPlan plan;
    plan.n_samples = 1000;
    plan.seed = 3;
    const Vector mean = vec({2.0, 1.0, 15.0, -1.0});
    const Matrix s = sample_parameters(duopoly_c1(), mean, plan);
    ASSERT_EQ(s.rows(), 1000);
    for (Eigen::Index d = 0; d < 4; ++d) {
        int below = 0;
        for (Eigen::Index r = 0; r < s.rows(); ++r) below += s(r, d) < mean[d];
        EXPECT_EQ(below, 500);
    }
    plan.n_samples = 101;
    const Matrix odd = sample_parameters(duopoly_c1(), mean, plan);
    for (Eigen::Index d = 0; d < 4; ++d) {
        int below = 0;
        for (Eigen::Index r = 0; r < odd.rows(); ++r) below += odd(r, d) < mean[d];
        EXPECT_LE(std::abs(2 * below - 101), 1);
    }
}

TEST(Sampling, CovarianceLawOfLargeNumbers) {
    SamplingPlan plan;
    plan.n_samples = 1000;
    plan.seed = 5;
    const Matrix s = sample_parameters(duopoly_c1(), vec({2.0, 1.0, 15.0, -1.0}), plan);
    const Matrix C = empirical_covariance(s);
    const Matrix& ref = duopoly_c1().matrix();
    EXPECT_LT((C - ref).norm(), 0.1 * ref.norm());
}

TEST(Sampling, Reproducible) {
    SamplingPlan plan;
    plan.n_samples = 64;
    plan.seed = 9;
    const Vector mean = vec({2.0, 1.0, 15.0, -1.0});
    EXPECT_EQ(sample_parameters(duopoly_c1(), mean, plan), sample_parameters(duopoly_c1(), mean, plan));
    SamplingPlan other = plan;
    other.seed = 10;
    EXPECT_NE(sample_parameters(duopoly_c1(), mean, plan), sample_parameters(duopoly_c1(), mean, other));
}

TEST(Sampling, PlanValidation) {
    SamplingPlan plan;
    plan.n_samples = 1;
    EXPECT_THROW(plan.validate(), ValidationError);
    plan.n_samples = 10;
    plan.strata_per_dim = 3;
    EXPECT_THROW(plan.validate(), ValidationError);
    plan.scheme = SamplingScheme::Plain;
    EXPECT_NO_THROW(plan.validate());
}

TEST(Sampling, SingularCovarianceFactors) {
    Matrix C(2, 2);
    C << 1, 1, 1, 1;
    const Matrix F = covariance_factor(CovarianceModel(C));
    EXPECT_LT((F * F.transpose() - C).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(McCovariance, DuopolyTraceWithinThreeStandardErrors) {
    const ParametrizedNCP p = models::make_oligopoly(models::duopoly_config());
    SamplingPlan plan;
    plan.n_samples = 2000;
    plan.seed = 17;
    const McReport r = mc_covariance(p, p.theta_mean, duopoly_c1(), plan);
    EXPECT_EQ(r.failures, 0u);
    EXPECT_FALSE(r.unreliable);
    EXPECT_EQ(r.solve_count, 2000u);
    // the duopoly solution map is exactly affine, so C* = T C T^T is the true covariance;
    // Var(trace) for Gaussian x is 2 tr(C*^2)
    Matrix Cs(2, 2);
    Cs << 0.4289, 0.4389, 0.4389, 0.5089;
    const double se = std::sqrt(2.0 * (Cs * Cs).trace() / (plan.n_samples - 1.0));
    EXPECT_NEAR(r.trace, 0.9378, 3.0 * se);
    EXPECT_EQ((r.covariance - r.covariance.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(McCovariance, BitwiseReproducible) {
    const ParametrizedNCP p = models::make_oligopoly(models::duopoly_config());
    SamplingPlan plan;
    plan.n_samples = 200;
    plan.seed = 23;
    const McReport a = mc_covariance(p, p.theta_mean, duopoly_c1(), plan);
    const McReport b = mc_covariance(p, p.theta_mean, duopoly_c1(), plan);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.covariance, b.covariance);
    EXPECT_EQ(a.trace, b.trace);
}

TEST(McCovariance, IdentityMapRecoversInput) {
    const ParametrizedNCP p = identity_map(3);
    Matrix C(3, 3);
    C << 2, 0.5, 0, 0.5, 1, 0.3, 0, 0.3, 0.5;
    const CovarianceModel Cm(C);
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t N : {400u, 40000u}) {
        SamplingPlan plan;
        plan.n_samples = N;
        plan.seed = 29;
        const McReport r = mc_covariance(p, p.theta_mean, Cm, plan);
        const double err = (r.covariance - C).cwiseAbs().maxCoeff();
        EXPECT_LT(err, 16.0 / std::sqrt(static_cast<double>(N)));
        EXPECT_LT(err, previous);
        previous = err;
    }
}

TEST(McCovariance, FailuresAreCountedAndFlagged) {
    // F = x - theta on x >= 0 is fine, except the evaluator refuses theta > 2.
    ParametrizedNCP p = identity_map(1);
    p.cone = ConeSpec::nonnegative_orthant(1);
    p.theta_mean = vec({2.0});
    p.eval_F = [](const Vector& x, const Vector& th) {
        if (th[0] > 2.5) return Vector(Vector::Constant(1, std::nan("")));
        return Vector(x - th);
    };
    SamplingPlan plan;
    plan.n_samples = 100;
    plan.seed = 31;
    const McReport r = mc_covariance(p, p.theta_mean, CovarianceModel::diagonal(vec({1.0})), plan, vec({2.0}));
    EXPECT_GT(r.failures, 5u);
    EXPECT_TRUE(r.unreliable);
    EXPECT_EQ(static_cast<std::size_t>(r.solutions.rows()) + r.failures, 100u);
}

TEST(McCovariance, QuadraticConvergesToExact) {
    // F = M x + theta, strongly monotone and interior at the mean: C* = M^-1 C M^-T exactly.
    Matrix M(2, 2);
    M << 3, 1, 1, 2;
    ParametrizedNCP p;
    p.n = 2;
    p.m = 2;
    p.cone = ConeSpec(2, {});
    p.theta_mean = vec({1.0, -1.0});
    p.eval_F = [M](const Vector& x, const Vector& th) { return Vector(M * x + th); };
    p.eval_G = [M](const Vector&, const Vector&) { return M; };
    p.eval_L = [](const Vector&, const Vector&) { return Matrix(Matrix::Identity(2, 2)); };
    const CovarianceModel C = CovarianceModel::diagonal(vec({1.0, 0.5}));
    const Matrix exact = M.inverse() * C.matrix() * M.inverse().transpose();
    SamplingPlan plan;
    plan.n_samples = 20000;
    plan.seed = 37;
    const McReport r = mc_covariance(p, p.theta_mean, C, plan);
    EXPECT_LT((r.covariance - exact).cwiseAbs().maxCoeff(), 0.02);
}

TEST(Race, SmallSizesComplete) {
    RaceOptions opt;
    opt.mc_budget_seconds = 60.0;
    opt.seed = 3;
    const auto rows = race(
        [](std::size_t n) {
            const auto cfg = models::benchmark_oligopoly_config(n);
            ParametrizedNCP prob = models::make_oligopoly(cfg);
            return RaceInstance{prob, CovarianceModel::diagonal(models::oligopoly_variances(n, 1.0, 0.0, 0.0))};
        },
        {3, 5}, opt);
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& r : rows) {
        EXPECT_FALSE(r.mc_extrapolated);
        EXPECT_EQ(r.mc_samples, 100u);
        EXPECT_EQ(r.random_parameters, r.size);
        EXPECT_GT(r.approx_seconds, 0.0);
        EXPECT_TRUE(std::isfinite(r.mc_trace));
    }
}

TEST(Race, OverBudgetIsExtrapolated) {
    RaceOptions opt;
    opt.mc_budget_seconds = 0.0;
    const auto rows = race(
        [](std::size_t n) {
            ParametrizedNCP prob = models::make_oligopoly(models::benchmark_oligopoly_config(n));
            return RaceInstance{prob, CovarianceModel::diagonal(models::oligopoly_variances(n, 1.0, 0.0, 0.0))};
        },
        {25}, opt);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_TRUE(rows[0].mc_extrapolated);
    EXPECT_EQ(rows[0].mc_samples, benchmark_sample_count(25));
    EXPECT_GT(rows[0].mc_seconds, 0.0);
    EXPECT_TRUE(std::isnan(rows[0].mc_trace));
}
