#pragma once

// k-player Nash-Cournot oligopoly with linear inverse demand P = a + b * sum(Q):
//   0 <= Q_i  _|_  F_i(Q) = gamma_i - a - b * sum_j Q_j - b * Q_i >= 0
// Parameters are ordered theta = (gamma_1, ..., gamma_k, a, b).

#include "scpuq/error.hpp"
#include "scpuq/ncp.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace scpuq::models {

struct OligopolyConfig {
    double a = 0.0;  ///< demand intercept
    double b = 0.0;  ///< demand slope, negative
    std::vector<double> gamma;  ///< unit production costs

    std::size_t players() const noexcept { return gamma.size(); }

    void validate() const {
        if (gamma.empty()) throw ValidationError("OligopolyConfig: need at least one player");
        if (!(b < 0.0)) throw ValidationError("OligopolyConfig: demand slope b must be negative");
        if (!(a > 0.0)) throw ValidationError("OligopolyConfig: demand intercept a must be positive");
    }

    Vector theta() const {
        Vector th(static_cast<Eigen::Index>(gamma.size() + 2));
        for (std::size_t i = 0; i < gamma.size(); ++i) th[static_cast<Eigen::Index>(i)] = gamma[i];
        th[th.size() - 2] = a;
        th[th.size() - 1] = b;
        return th;
    }
};

/// The duopoly with theta = (2, 1, 15, -1); equilibrium Q = (4, 5).
inline OligopolyConfig duopoly_config() { return {15.0, -1.0, {2.0, 1.0}}; }

/// a = 500, b = -0.5, gamma_i = 100 + 3 i for i = 1..n.
inline OligopolyConfig benchmark_oligopoly_config(std::size_t n) {
    OligopolyConfig cfg{500.0, -0.5, {}};
    for (std::size_t i = 1; i <= n; ++i) cfg.gamma.push_back(100.0 + 3.0 * static_cast<double>(i));
    return cfg;
}

inline ParametrizedNCP make_oligopoly(const OligopolyConfig& cfg) {
    cfg.validate();
    const auto k = static_cast<Eigen::Index>(cfg.players());
    ParametrizedNCP p;
    p.n = cfg.players();
    p.m = cfg.players() + 2;
    p.cone = ConeSpec::nonnegative_orthant(p.n);
    p.theta_mean = cfg.theta();
    p.eval_F = [k](const Vector& Q, const Vector& th) {
        const double a = th[k], b = th[k + 1];
        const double total = Q.sum();
        return Vector((th.head(k).array() - a - b * total - b * Q.array()).matrix());
    };
    p.eval_G = [k](const Vector&, const Vector& th) {
        const double b = th[k + 1];
        return Matrix(Matrix::Constant(k, k, -b) - b * Matrix::Identity(k, k));
    };
    p.eval_L = [k](const Vector& Q, const Vector&) {
        Matrix L = Matrix::Zero(k, k + 2);
        L.leftCols(k).setIdentity();
        L.col(k).setConstant(-1.0);
        L.col(k + 1) = -(Vector::Constant(k, Q.sum()) + Q);
        return L;
    };
    for (std::size_t i = 1; i <= p.n; ++i) p.variable_names.push_back("Q_" + std::to_string(i));
    for (std::size_t i = 1; i <= p.n; ++i) p.parameter_names.push_back("gamma_" + std::to_string(i));
    p.parameter_names.push_back("a");
    p.parameter_names.push_back("b");
    return p;
}

/// Variances (var_gamma for every cost, var_a, var_b) as a diagonal vector.
inline Vector oligopoly_variances(std::size_t players, double var_gamma, double var_a, double var_b) {
    Vector v = Vector::Constant(static_cast<Eigen::Index>(players + 2), var_gamma);
    v[v.size() - 2] = var_a;
    v[v.size() - 1] = var_b;
    return v;
}

/// Active-set Cournot equilibrium: with A the active players,
///   Q_total = (sum_A gamma - |A| a) / (b (|A| + 1)),  P = a + b Q_total,
///   Q_i = (P - gamma_i) / (-b) for i in A, 0 otherwise.
/// The costliest player with negative output is dropped until none remain.
inline Vector cournot_closed_form(const OligopolyConfig& cfg) {
    cfg.validate();
    const std::size_t k = cfg.players();
    std::vector<bool> active(k, true);
    Vector Q = Vector::Zero(static_cast<Eigen::Index>(k));
    for (;;) {
        double sum_gamma = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < k; ++i) {
            if (active[i]) {
                sum_gamma += cfg.gamma[i];
                ++count;
            }
        }
        Q.setZero();
        if (count == 0) return Q;
        const double total = (sum_gamma - static_cast<double>(count) * cfg.a) / (cfg.b * static_cast<double>(count + 1));
        const double price = cfg.a + cfg.b * total;
        std::size_t worst = k;
        for (std::size_t i = 0; i < k; ++i) {
            if (!active[i]) continue;
            Q[static_cast<Eigen::Index>(i)] = (price - cfg.gamma[i]) / (-cfg.b);
            if (Q[static_cast<Eigen::Index>(i)] < 0.0 && (worst == k || cfg.gamma[i] > cfg.gamma[worst])) worst = i;
        }
        if (worst == k) return Q;
        active[worst] = false;
    }
}

}  // namespace scpuq::models
