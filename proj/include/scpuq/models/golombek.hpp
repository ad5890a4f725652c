#pragma once

// Golombek production cost
//   cost(q, cap) = (l + g) q + quad q^2 + g (cap - q) log(1 - q / cap)
// whose marginal cost l + 2 quad q - g log(1 - q/cap) grows without bound as
// output approaches capacity.

#include "scpuq/error.hpp"

#include <cmath>
#include <string>

namespace scpuq::models {

struct GolombekCoefficients {
    double lin = 0.0;   ///< l
    double glb = 0.0;   ///< g, nonnegative
    double quad = 0.0;  ///< q
};

struct GolombekValue {
    double cost = 0.0;
    double d_q = 0.0;     ///< d cost / d q
    double d_cap = 0.0;   ///< d cost / d cap
    double d_qq = 0.0;
    double d_qcap = 0.0;
    double d_capcap = 0.0;
};

namespace detail {

inline GolombekValue golombek_unchecked(double q, double cap, const GolombekCoefficients& c) {
    const double slack = cap - q;
    const double lg = std::log1p(-q / cap);
    GolombekValue v;
    v.cost = (c.lin + c.glb) * q + c.quad * q * q + c.glb * slack * lg;
    v.d_q = c.lin + 2.0 * c.quad * q - c.glb * lg;
    v.d_cap = c.glb * (lg + q / cap);
    v.d_qq = 2.0 * c.quad + c.glb / slack;
    v.d_qcap = -c.glb * q / (cap * slack);
    v.d_capcap = c.glb * q * q / (cap * cap * slack);
    return v;
}

}  // namespace detail

/// Strict evaluation on the domain 0 <= q < cap.
inline GolombekValue golombek_cost(double q, double cap, const GolombekCoefficients& c) {
    if (!(cap > 0.0)) throw DomainError("golombek_cost: capacity must be positive");
    if (!(q < cap)) throw DomainError("golombek_cost: output " + std::to_string(q) + " reaches capacity " + std::to_string(cap));
    if (q < 0.0) throw DomainError("golombek_cost: negative output");
    return detail::golombek_unchecked(q, cap, c);
}

/// Evaluation used inside the equilibrium model, where a solver iterate can
/// leave the physical domain. Capacity is floored at a tiny positive value.
/// Past q = (1 - 1e-9) cap the cost continues as its second-order Taylor
/// expansion in q, so the gradient stays finite and continuous.
inline GolombekValue golombek_cost_guarded(double q, double cap, const GolombekCoefficients& c) {
    constexpr double kCapFloor = 1e-12;
    constexpr double kMaxUtilisation = 1.0 - 1e-9;
    const double cap_g = std::max(cap, kCapFloor);
    const double q_max = kMaxUtilisation * cap_g;
    if (q <= q_max) return detail::golombek_unchecked(q, cap_g, c);
    GolombekValue v = detail::golombek_unchecked(q_max, cap_g, c);
    const double dq = q - q_max;
    v.cost += v.d_q * dq + 0.5 * v.d_qq * dq * dq;
    v.d_q += v.d_qq * dq;
    v.d_cap += v.d_qcap * dq;
    return v;
}

}  // namespace scpuq::models
