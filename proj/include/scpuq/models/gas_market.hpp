#pragma once

// Natural-gas market equilibrium: price-taking suppliers, a pipeline operator
// and linear inverse demand, written as one NCP by stacking the KKT systems.
//
// Supplier p, year y (all rows discounted by df_y):
//   Q_pcy  : -df pi_cy + alpha_d(p, node(c), y)                         >= 0
//   X_py   :  df piX_py - sum_{y' >= y} alpha_c(p, y')                   >= 0
//   Q_pay  :  df pi_ay + alpha_d(p, from(a), y) - (1 - loss_a) alpha_d(p, to(a), y) >= 0
//   Q_py   :  df dcost/dQ + alpha_b - (1 - loss_p) alpha_d(p, home, y)   >= 0
//   Cap_py :  df dcost/dCap - avl alpha_b + alpha_c                      >= 0
//   alpha_b:  avl Cap_py - Q_py                                          >= 0
//   alpha_c:  Cap_py - Q_p0 - sum_{i <= y} X_pi                          =  0
//   alpha_d:  outflow - inflow at each node the supplier can reach       =  0
// Arc a, year y:
//   Q_ay   :  df (cost_ay - pi_ay) + alpha_h                             >= 0
//   X_ay   :  df piX_ay - sum_{y' >= y} alpha_i(a, y')                   >= 0
//   Cap_ay :  alpha_i - alpha_h                                          >= 0
//   alpha_h:  Cap_ay - Q_ay                                              >= 0
//   alpha_i:  Cap_ay - Q_a0 - sum_{i <= y} X_ai                          =  0
//   pi_ay  :  Q_ay - sum_p Q_pay                                         =  0
// Consumer c, year y:
//   pi_cy  :  pi_cy - DemI_cy - DemS_cy sum_p Q_pcy                      =  0
//
// Supplier variables are created only for nodes, consumers and arcs reachable
// from the supplier's home node.

#include "scpuq/error.hpp"
#include "scpuq/models/golombek.hpp"
#include "scpuq/ncp.hpp"
#include "scpuq/sparse_ndarray.hpp"
#include "scpuq/uq.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace scpuq::models {

struct GasSupplier {
    std::string name;
    std::string node;
    double initial_capacity = 0.0;  ///< Q_p0, volume/year
    double loss = 0.0;
    double glb = 0.0;  ///< Golombek g, fixed
    std::vector<double> lin;              ///< per year
    std::vector<double> quad;             ///< per year
    std::vector<double> expansion_price;  ///< piX_py per year
};

struct GasConsumer {
    std::string name;
    std::string node;
    std::vector<double> dem_int;    ///< DemI_cy
    std::vector<double> dem_slope;  ///< DemS_cy, negative
};

struct GasArc {
    std::string name;
    std::string from;
    std::string to;
    double initial_capacity = 0.0;
    double loss = 0.0;
    std::vector<double> cost;             ///< operating cost per unit and year
    std::vector<double> expansion_price;  ///< piX_ay per year
};

struct GasMarketModel {
    std::vector<std::string> nodes;
    std::vector<GasSupplier> suppliers;
    std::vector<GasConsumer> consumers;
    std::vector<GasArc> arcs;
    std::vector<double> discount;  ///< df_y, one per year
    double availability = 0.96;

    std::size_t years() const noexcept { return discount.size(); }

    std::size_t node_index(const std::string& name, const std::string& context) const {
        const auto it = std::find(nodes.begin(), nodes.end(), name);
        if (it == nodes.end()) throw ValidationError(context + ": unknown node '" + name + "'");
        return static_cast<std::size_t>(it - nodes.begin());
    }

    void validate() const {
        if (nodes.empty()) throw ValidationError("gas model: no nodes");
        if (suppliers.empty()) throw ValidationError("gas model: no suppliers");
        if (consumers.empty()) throw ValidationError("gas model: no consumers");
        if (discount.empty()) throw ValidationError("gas model: no years");
        if (!(availability > 0.0 && availability <= 1.0)) throw ValidationError("gas model: availability must lie in (0, 1]");
        for (std::size_t y = 0; y < discount.size(); ++y)
            if (!(discount[y] > 0.0 && discount[y] <= 1.0))
                throw ValidationError("gas model: discount factor of year " + std::to_string(y + 1) + " outside (0, 1]");
        std::set<std::string> seen_nodes(nodes.begin(), nodes.end());
        if (seen_nodes.size() != nodes.size()) throw ValidationError("gas model: duplicate node name");
        const std::size_t Y = years();
        auto per_year = [Y](const std::vector<double>& v, const std::string& what) {
            if (v.size() != Y)
                throw ValidationError("gas model: " + what + " has " + std::to_string(v.size()) + " values, expected " +
                                      std::to_string(Y));
        };
        auto loss_ok = [](double l, const std::string& what) {
            if (!(l >= 0.0 && l < 1.0)) throw ValidationError("gas model: loss of " + what + " outside [0, 1)");
        };
        std::set<std::string> names;
        for (const auto& s : suppliers) {
            const std::string ctx = "supplier '" + s.name + "'";
            if (!names.insert("s:" + s.name).second) throw ValidationError("gas model: duplicate " + ctx);
            node_index(s.node, ctx);
            if (!(s.initial_capacity > 0.0)) throw ValidationError("gas model: " + ctx + " needs positive initial capacity");
            if (!(s.glb >= 0.0)) throw ValidationError("gas model: " + ctx + " has negative Golombek g");
            loss_ok(s.loss, ctx);
            per_year(s.lin, ctx + " lin");
            per_year(s.quad, ctx + " quad");
            per_year(s.expansion_price, ctx + " expansion_price");
        }
        for (const auto& c : consumers) {
            const std::string ctx = "consumer '" + c.name + "'";
            if (!names.insert("c:" + c.name).second) throw ValidationError("gas model: duplicate " + ctx);
            node_index(c.node, ctx);
            per_year(c.dem_int, ctx + " dem_int");
            per_year(c.dem_slope, ctx + " dem_slope");
            for (double s : c.dem_slope)
                if (!(s < 0.0)) throw ValidationError("gas model: " + ctx + " has a nonnegative demand slope");
        }
        for (const auto& a : arcs) {
            const std::string ctx = "arc '" + a.name + "'";
            if (!names.insert("a:" + a.name).second) throw ValidationError("gas model: duplicate " + ctx);
            if (node_index(a.from, ctx) == node_index(a.to, ctx))
                throw ValidationError("gas model: " + ctx + " leaves and enters the same node");
            if (!(a.initial_capacity >= 0.0)) throw ValidationError("gas model: " + ctx + " has negative initial capacity");
            loss_ok(a.loss, ctx);
            per_year(a.cost, ctx + " cost");
            per_year(a.expansion_price, ctx + " expansion_price");
        }
    }
};

enum class GasVar {
    Q_pcy, Q_py, Q_pay, Q_ay, X_py, X_ay, Cap_py, Cap_ay,
    alpha_b, alpha_c, alpha_d, alpha_h, alpha_i, pi_cy, pi_ay
};

inline const char* to_string(GasVar v) noexcept {
    static constexpr std::array<const char*, 15> names = {"Q_pcy", "Q_py",    "Q_pay",   "Q_ay",    "X_py",
                                                          "X_ay",  "Cap_py",  "Cap_ay",  "alpha_b", "alpha_c",
                                                          "alpha_d", "alpha_h", "alpha_i", "pi_cy", "pi_ay"};
    return names[static_cast<std::size_t>(v)];
}

/// Identifies one model variable. `first` is the supplier, arc or consumer;
/// `second` the consumer, arc or node it is paired with (-1 when unused).
struct GasVariableKey {
    GasVar kind;
    int first = -1;
    int second = -1;
    int year = 0;

    auto tie() const { return std::tie(kind, first, second, year); }
    bool operator<(const GasVariableKey& o) const { return tie() < o.tie(); }
    bool operator==(const GasVariableKey& o) const { return tie() == o.tie(); }
};

/// Bijection between named model variables and flat NCP coordinates.
class GasVariableIndex {
public:
    std::size_t add(const GasVariableKey& key, bool nonneg, std::string name) {
        if (map_.count(key)) throw ValidationError("GasVariableIndex: duplicate variable " + name);
        map_.emplace(key, keys_.size());
        keys_.push_back(key);
        nonneg_.push_back(nonneg);
        names_.push_back(std::move(name));
        return keys_.size() - 1;
    }

    std::optional<std::size_t> find(const GasVariableKey& key) const {
        const auto it = map_.find(key);
        if (it == map_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t at(const GasVariableKey& key) const {
        const auto it = map_.find(key);
        if (it == map_.end())
            throw IndexError(std::string("GasVariableIndex: no variable ") + to_string(key.kind) + "(" +
                             std::to_string(key.first) + "," + std::to_string(key.second) + "," +
                             std::to_string(key.year) + ")");
        return it->second;
    }

    std::size_t size() const noexcept { return keys_.size(); }
    const GasVariableKey& key(std::size_t i) const { return keys_.at(i); }
    bool is_nonneg(std::size_t i) const { return nonneg_.at(i); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<bool>& cone_mask() const noexcept { return nonneg_; }

    std::vector<std::size_t> of_kind(GasVar kind) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < keys_.size(); ++i)
            if (keys_[i].kind == kind) out.push_back(i);
        return out;
    }

private:
    std::map<GasVariableKey, std::size_t> map_;
    std::vector<GasVariableKey> keys_;
    std::vector<bool> nonneg_;
    std::vector<std::string> names_;
};

enum class GasParamFamily { DemandIntercept, DemandSlope, LinearCost, QuadraticCost, ArcCost, ProductionExpansion, ArcExpansion };

inline constexpr std::array<GasParamFamily, 7> kGasParamFamilies = {
    GasParamFamily::DemandIntercept, GasParamFamily::DemandSlope,         GasParamFamily::LinearCost,
    GasParamFamily::QuadraticCost,   GasParamFamily::ArcCost,             GasParamFamily::ProductionExpansion,
    GasParamFamily::ArcExpansion};

inline const char* to_string(GasParamFamily f) noexcept {
    switch (f) {
        case GasParamFamily::DemandIntercept: return "dem_int";
        case GasParamFamily::DemandSlope: return "dem_slope";
        case GasParamFamily::LinearCost: return "lin";
        case GasParamFamily::QuadraticCost: return "quad";
        case GasParamFamily::ArcCost: return "arc_cost";
        case GasParamFamily::ProductionExpansion: return "prod_expansion";
        case GasParamFamily::ArcExpansion: return "arc_expansion";
    }
    return "?";
}

inline std::optional<GasParamFamily> gas_param_family_from_string(const std::string& s) {
    for (GasParamFamily f : kGasParamFamilies)
        if (s == to_string(f)) return f;
    return std::nullopt;
}

/// theta is laid out family by family, entity by entity, with the years of
/// one (family, entity) pair contiguous.
class GasParameterLayout {
public:
    GasParameterLayout() = default;
    GasParameterLayout(std::size_t suppliers, std::size_t consumers, std::size_t arcs, std::size_t years)
        : years_(years) {
        std::size_t at = 0;
        for (GasParamFamily f : kGasParamFamilies) {
            const auto k = static_cast<std::size_t>(f);
            offset_[k] = at;
            switch (f) {
                case GasParamFamily::DemandIntercept:
                case GasParamFamily::DemandSlope: entities_[k] = consumers; break;
                case GasParamFamily::LinearCost:
                case GasParamFamily::QuadraticCost:
                case GasParamFamily::ProductionExpansion: entities_[k] = suppliers; break;
                case GasParamFamily::ArcCost:
                case GasParamFamily::ArcExpansion: entities_[k] = arcs; break;
            }
            at += entities_[k] * years;
        }
        size_ = at;
    }

    std::size_t size() const noexcept { return size_; }
    std::size_t years() const noexcept { return years_; }
    std::size_t entities(GasParamFamily f) const { return entities_[static_cast<std::size_t>(f)]; }
    std::size_t offset(GasParamFamily f) const { return offset_[static_cast<std::size_t>(f)]; }

    std::size_t index(GasParamFamily f, std::size_t entity, std::size_t year) const {
        if (entity >= entities(f) || year >= years_) throw IndexError("GasParameterLayout: index out of range");
        return offset(f) + entity * years_ + year;
    }

    GasParamFamily family_of(std::size_t d) const {
        if (d >= size_) throw IndexError("GasParameterLayout: parameter index out of range");
        GasParamFamily found = kGasParamFamilies.front();
        for (GasParamFamily f : kGasParamFamilies)
            if (entities(f) > 0 && d >= offset(f)) found = f;
        return found;
    }

    std::vector<std::size_t> indices_of(GasParamFamily f) const {
        std::vector<std::size_t> out(entities(f) * years_);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = offset(f) + k;
        return out;
    }

private:
    std::size_t years_ = 0;
    std::size_t size_ = 0;
    std::array<std::size_t, 7> offset_{};
    std::array<std::size_t, 7> entities_{};
};

namespace detail {

/// Immutable assembly data shared by the evaluator closures.
struct GasAssembly {
    GasMarketModel model;
    GasVariableIndex vars;
    GasParameterLayout params;
    std::vector<std::size_t> supplier_home;
    std::vector<std::size_t> consumer_node;
    std::vector<std::size_t> arc_from;
    std::vector<std::size_t> arc_to;
    std::vector<std::vector<bool>> reach;  ///< reach[p][node]

    std::size_t var(GasVar kind, int first, int second, int year) const { return vars.at({kind, first, second, year}); }
    std::optional<std::size_t> find(GasVar kind, int first, int second, int year) const {
        return vars.find({kind, first, second, year});
    }
    std::size_t par(GasParamFamily f, std::size_t entity, std::size_t year) const { return params.index(f, entity, year); }

    /// Residual F(x; theta). Each call of sink(row, col, value) adds one
    /// Jacobian contribution; JacX receives dF/dx and JacT receives dF/dtheta.
    template <class ValueSink, class JacX, class JacT>
    void assemble(const Vector& x, const Vector& th, ValueSink&& value, JacX&& jx, JacT&& jt) const;
};

template <class ValueSink, class JacX, class JacT>
void GasAssembly::assemble(const Vector& x, const Vector& th, ValueSink&& value, JacX&& jx, JacT&& jt) const {
    const auto X = [&](std::size_t i) { return x[static_cast<Eigen::Index>(i)]; };
    const auto P = [&](std::size_t d) { return th[static_cast<Eigen::Index>(d)]; };
    const int Y = static_cast<int>(model.years());
    const double avl = model.availability;

    for (int y = 0; y < Y; ++y) {
        const double df = model.discount[static_cast<std::size_t>(y)];
        const auto yy = static_cast<std::size_t>(y);

        for (int p = 0; p < static_cast<int>(model.suppliers.size()); ++p) {
            const GasSupplier& s = model.suppliers[static_cast<std::size_t>(p)];
            const auto home = static_cast<int>(supplier_home[static_cast<std::size_t>(p)]);
            const std::size_t iQ = var(GasVar::Q_py, p, -1, y);
            const std::size_t iX = var(GasVar::X_py, p, -1, y);
            const std::size_t iCap = var(GasVar::Cap_py, p, -1, y);
            const std::size_t iB = var(GasVar::alpha_b, p, -1, y);
            const std::size_t iC = var(GasVar::alpha_c, p, -1, y);
            const std::size_t iDhome = var(GasVar::alpha_d, p, home, y);

            for (int c = 0; c < static_cast<int>(model.consumers.size()); ++c) {
                const auto row = find(GasVar::Q_pcy, p, c, y);
                if (!row) continue;
                const int node = static_cast<int>(consumer_node[static_cast<std::size_t>(c)]);
                const std::size_t iPi = var(GasVar::pi_cy, c, -1, y);
                const std::size_t iD = var(GasVar::alpha_d, p, node, y);
                value(*row, -df * X(iPi) + X(iD));
                jx(*row, iPi, -df);
                jx(*row, iD, 1.0);
            }

            {
                const std::size_t d = par(GasParamFamily::ProductionExpansion, static_cast<std::size_t>(p), yy);
                double f = df * P(d);
                for (int y2 = y; y2 < Y; ++y2) {
                    const std::size_t iC2 = var(GasVar::alpha_c, p, -1, y2);
                    f -= X(iC2);
                    jx(iX, iC2, -1.0);
                }
                value(iX, f);
                jt(iX, d, df);
            }

            for (int a = 0; a < static_cast<int>(model.arcs.size()); ++a) {
                const auto row = find(GasVar::Q_pay, p, a, y);
                if (!row) continue;
                const GasArc& arc = model.arcs[static_cast<std::size_t>(a)];
                const std::size_t iPi = var(GasVar::pi_ay, a, -1, y);
                const std::size_t iOut = var(GasVar::alpha_d, p, static_cast<int>(arc_from[static_cast<std::size_t>(a)]), y);
                const std::size_t iIn = var(GasVar::alpha_d, p, static_cast<int>(arc_to[static_cast<std::size_t>(a)]), y);
                value(*row, df * X(iPi) + X(iOut) - (1.0 - arc.loss) * X(iIn));
                jx(*row, iPi, df);
                jx(*row, iOut, 1.0);
                jx(*row, iIn, -(1.0 - arc.loss));
            }

            const std::size_t dLin = par(GasParamFamily::LinearCost, static_cast<std::size_t>(p), yy);
            const std::size_t dQuad = par(GasParamFamily::QuadraticCost, static_cast<std::size_t>(p), yy);
            const GolombekCoefficients coef{P(dLin), s.glb, P(dQuad)};
            const GolombekValue g = golombek_cost_guarded(X(iQ), X(iCap), coef);

            value(iQ, df * g.d_q + X(iB) - (1.0 - s.loss) * X(iDhome));
            jx(iQ, iQ, df * g.d_qq);
            jx(iQ, iCap, df * g.d_qcap);
            jx(iQ, iB, 1.0);
            jx(iQ, iDhome, -(1.0 - s.loss));
            jt(iQ, dLin, df);
            jt(iQ, dQuad, df * 2.0 * X(iQ));

            value(iCap, df * g.d_cap - avl * X(iB) + X(iC));
            jx(iCap, iQ, df * g.d_qcap);
            jx(iCap, iCap, df * g.d_capcap);
            jx(iCap, iB, -avl);
            jx(iCap, iC, 1.0);

            value(iB, avl * X(iCap) - X(iQ));
            jx(iB, iCap, avl);
            jx(iB, iQ, -1.0);

            {
                double f = X(iCap) - s.initial_capacity;
                jx(iC, iCap, 1.0);
                for (int y2 = 0; y2 <= y; ++y2) {
                    const std::size_t iX2 = var(GasVar::X_py, p, -1, y2);
                    f -= X(iX2);
                    jx(iC, iX2, -1.0);
                }
                value(iC, f);
            }

            for (int n = 0; n < static_cast<int>(model.nodes.size()); ++n) {
                const auto row = find(GasVar::alpha_d, p, n, y);
                if (!row) continue;
                double f = 0.0;
                for (int c = 0; c < static_cast<int>(model.consumers.size()); ++c) {
                    if (static_cast<int>(consumer_node[static_cast<std::size_t>(c)]) != n) continue;
                    if (const auto iq = find(GasVar::Q_pcy, p, c, y)) {
                        f += X(*iq);
                        jx(*row, *iq, 1.0);
                    }
                }
                if (n == home) {
                    f -= (1.0 - s.loss) * X(iQ);
                    jx(*row, iQ, -(1.0 - s.loss));
                }
                for (int a = 0; a < static_cast<int>(model.arcs.size()); ++a) {
                    const auto iq = find(GasVar::Q_pay, p, a, y);
                    if (!iq) continue;
                    if (static_cast<int>(arc_from[static_cast<std::size_t>(a)]) == n) {
                        f += X(*iq);
                        jx(*row, *iq, 1.0);
                    }
                    if (static_cast<int>(arc_to[static_cast<std::size_t>(a)]) == n) {
                        const double keep = 1.0 - model.arcs[static_cast<std::size_t>(a)].loss;
                        f -= keep * X(*iq);
                        jx(*row, *iq, -keep);
                    }
                }
                value(*row, f);
            }
        }

        for (int a = 0; a < static_cast<int>(model.arcs.size()); ++a) {
            const GasArc& arc = model.arcs[static_cast<std::size_t>(a)];
            const std::size_t iQ = var(GasVar::Q_ay, a, -1, y);
            const std::size_t iX = var(GasVar::X_ay, a, -1, y);
            const std::size_t iCap = var(GasVar::Cap_ay, a, -1, y);
            const std::size_t iH = var(GasVar::alpha_h, a, -1, y);
            const std::size_t iI = var(GasVar::alpha_i, a, -1, y);
            const std::size_t iPi = var(GasVar::pi_ay, a, -1, y);
            const std::size_t dCost = par(GasParamFamily::ArcCost, static_cast<std::size_t>(a), yy);
            const std::size_t dExp = par(GasParamFamily::ArcExpansion, static_cast<std::size_t>(a), yy);

            value(iQ, df * (P(dCost) - X(iPi)) + X(iH));
            jx(iQ, iPi, -df);
            jx(iQ, iH, 1.0);
            jt(iQ, dCost, df);

            {
                double f = df * P(dExp);
                for (int y2 = y; y2 < Y; ++y2) {
                    const std::size_t iI2 = var(GasVar::alpha_i, a, -1, y2);
                    f -= X(iI2);
                    jx(iX, iI2, -1.0);
                }
                value(iX, f);
                jt(iX, dExp, df);
            }

            value(iCap, X(iI) - X(iH));
            jx(iCap, iI, 1.0);
            jx(iCap, iH, -1.0);

            value(iH, X(iCap) - X(iQ));
            jx(iH, iCap, 1.0);
            jx(iH, iQ, -1.0);

            {
                double f = X(iCap) - arc.initial_capacity;
                jx(iI, iCap, 1.0);
                for (int y2 = 0; y2 <= y; ++y2) {
                    const std::size_t iX2 = var(GasVar::X_ay, a, -1, y2);
                    f -= X(iX2);
                    jx(iI, iX2, -1.0);
                }
                value(iI, f);
            }

            {
                double f = X(iQ);
                jx(iPi, iQ, 1.0);
                for (int p = 0; p < static_cast<int>(model.suppliers.size()); ++p) {
                    if (const auto iq = find(GasVar::Q_pay, p, a, y)) {
                        f -= X(*iq);
                        jx(iPi, *iq, -1.0);
                    }
                }
                value(iPi, f);
            }
        }

        for (int c = 0; c < static_cast<int>(model.consumers.size()); ++c) {
            const std::size_t iPi = var(GasVar::pi_cy, c, -1, y);
            const std::size_t dI = par(GasParamFamily::DemandIntercept, static_cast<std::size_t>(c), yy);
            const std::size_t dS = par(GasParamFamily::DemandSlope, static_cast<std::size_t>(c), yy);
            double total = 0.0;
            std::vector<std::size_t> sellers;
            for (int p = 0; p < static_cast<int>(model.suppliers.size()); ++p) {
                if (const auto iq = find(GasVar::Q_pcy, p, c, y)) {
                    total += X(*iq);
                    sellers.push_back(*iq);
                }
            }
            value(iPi, X(iPi) - P(dI) - P(dS) * total);
            jx(iPi, iPi, 1.0);
            for (std::size_t iq : sellers) jx(iPi, iq, -P(dS));
            jt(iPi, dI, -1.0);
            jt(iPi, dS, -total);
        }
    }
}

inline std::shared_ptr<const GasAssembly> build_gas_assembly(const GasMarketModel& model) {
    model.validate();
    auto as = std::make_shared<GasAssembly>();
    as->model = model;
    const std::size_t N = model.nodes.size();
    for (const auto& s : model.suppliers) as->supplier_home.push_back(model.node_index(s.node, "supplier '" + s.name + "'"));
    for (const auto& c : model.consumers) as->consumer_node.push_back(model.node_index(c.node, "consumer '" + c.name + "'"));
    for (const auto& a : model.arcs) {
        as->arc_from.push_back(model.node_index(a.from, "arc '" + a.name + "'"));
        as->arc_to.push_back(model.node_index(a.to, "arc '" + a.name + "'"));
    }

    for (std::size_t p = 0; p < model.suppliers.size(); ++p) {
        std::vector<bool> seen(N, false);
        std::queue<std::size_t> todo;
        seen[as->supplier_home[p]] = true;
        todo.push(as->supplier_home[p]);
        while (!todo.empty()) {
            const std::size_t n = todo.front();
            todo.pop();
            for (std::size_t a = 0; a < model.arcs.size(); ++a) {
                if (as->arc_from[a] == n && !seen[as->arc_to[a]]) {
                    seen[as->arc_to[a]] = true;
                    todo.push(as->arc_to[a]);
                }
            }
        }
        as->reach.push_back(std::move(seen));
    }
    for (std::size_t c = 0; c < model.consumers.size(); ++c) {
        bool ok = false;
        for (const auto& r : as->reach) ok = ok || r[as->consumer_node[c]];
        if (!ok) throw ValidationError("gas model: consumer '" + model.consumers[c].name + "' is not reachable from any supplier");
    }
    for (std::size_t a = 0; a < model.arcs.size(); ++a) {
        bool ok = false;
        for (const auto& r : as->reach) ok = ok || r[as->arc_from[a]];
        if (!ok) throw ValidationError("gas model: arc '" + model.arcs[a].name + "' carries no supplier's gas");
    }

    auto& V = as->vars;
    const int Y = static_cast<int>(model.years());
    auto yname = [](int y) { return ",y" + std::to_string(y + 1) + "]"; };
    for (int y = 0; y < Y; ++y) {
        for (int p = 0; p < static_cast<int>(model.suppliers.size()); ++p) {
            const auto& sp = model.suppliers[static_cast<std::size_t>(p)];
            const auto& r = as->reach[static_cast<std::size_t>(p)];
            for (int c = 0; c < static_cast<int>(model.consumers.size()); ++c)
                if (r[as->consumer_node[static_cast<std::size_t>(c)]])
                    V.add({GasVar::Q_pcy, p, c, y}, true,
                          "Q_pcy[" + sp.name + "," + model.consumers[static_cast<std::size_t>(c)].name + yname(y));
            V.add({GasVar::Q_py, p, -1, y}, true, "Q_py[" + sp.name + yname(y));
            for (int a = 0; a < static_cast<int>(model.arcs.size()); ++a)
                if (r[as->arc_from[static_cast<std::size_t>(a)]])
                    V.add({GasVar::Q_pay, p, a, y}, true,
                          "Q_pay[" + sp.name + "," + model.arcs[static_cast<std::size_t>(a)].name + yname(y));
            V.add({GasVar::X_py, p, -1, y}, true, "X_py[" + sp.name + yname(y));
            V.add({GasVar::Cap_py, p, -1, y}, true, "Cap_py[" + sp.name + yname(y));
            V.add({GasVar::alpha_b, p, -1, y}, true, "alpha_b[" + sp.name + yname(y));
            V.add({GasVar::alpha_c, p, -1, y}, false, "alpha_c[" + sp.name + yname(y));
            for (int n = 0; n < static_cast<int>(N); ++n)
                if (r[static_cast<std::size_t>(n)])
                    V.add({GasVar::alpha_d, p, n, y}, false,
                          "alpha_d[" + sp.name + "," + model.nodes[static_cast<std::size_t>(n)] + yname(y));
        }
        for (int a = 0; a < static_cast<int>(model.arcs.size()); ++a) {
            const std::string an = model.arcs[static_cast<std::size_t>(a)].name;
            V.add({GasVar::Q_ay, a, -1, y}, true, "Q_ay[" + an + yname(y));
            V.add({GasVar::X_ay, a, -1, y}, true, "X_ay[" + an + yname(y));
            V.add({GasVar::Cap_ay, a, -1, y}, true, "Cap_ay[" + an + yname(y));
            V.add({GasVar::alpha_h, a, -1, y}, true, "alpha_h[" + an + yname(y));
            V.add({GasVar::alpha_i, a, -1, y}, false, "alpha_i[" + an + yname(y));
            V.add({GasVar::pi_ay, a, -1, y}, false, "pi_ay[" + an + yname(y));
        }
        for (int c = 0; c < static_cast<int>(model.consumers.size()); ++c)
            V.add({GasVar::pi_cy, c, -1, y}, false, "pi_cy[" + model.consumers[static_cast<std::size_t>(c)].name + yname(y));
    }
    as->params = GasParameterLayout(model.suppliers.size(), model.consumers.size(), model.arcs.size(), model.years());
    return as;
}

}  // namespace detail

/// A generated gas NCP together with its variable and parameter maps.
struct GasMarket {
    ParametrizedNCP problem;
    std::shared_ptr<const detail::GasAssembly> assembly;

    const GasMarketModel& model() const { return assembly->model; }
    const GasVariableIndex& variables() const { return assembly->vars; }
    const GasParameterLayout& parameters() const { return assembly->params; }
};

inline Vector gas_theta(const detail::GasAssembly& as) {
    const auto& m = as.model;
    Vector th(static_cast<Eigen::Index>(as.params.size()));
    auto put = [&](GasParamFamily f, std::size_t e, const std::vector<double>& v) {
        for (std::size_t y = 0; y < v.size(); ++y) th[static_cast<Eigen::Index>(as.params.index(f, e, y))] = v[y];
    };
    for (std::size_t c = 0; c < m.consumers.size(); ++c) {
        put(GasParamFamily::DemandIntercept, c, m.consumers[c].dem_int);
        put(GasParamFamily::DemandSlope, c, m.consumers[c].dem_slope);
    }
    for (std::size_t p = 0; p < m.suppliers.size(); ++p) {
        put(GasParamFamily::LinearCost, p, m.suppliers[p].lin);
        put(GasParamFamily::QuadraticCost, p, m.suppliers[p].quad);
        put(GasParamFamily::ProductionExpansion, p, m.suppliers[p].expansion_price);
    }
    for (std::size_t a = 0; a < m.arcs.size(); ++a) {
        put(GasParamFamily::ArcCost, a, m.arcs[a].cost);
        put(GasParamFamily::ArcExpansion, a, m.arcs[a].expansion_price);
    }
    return th;
}

inline std::vector<std::string> gas_parameter_names(const detail::GasAssembly& as) {
    std::vector<std::string> names(as.params.size());
    const auto& m = as.model;
    for (GasParamFamily f : kGasParamFamilies) {
        for (std::size_t e = 0; e < as.params.entities(f); ++e) {
            std::string entity;
            switch (f) {
                case GasParamFamily::DemandIntercept:
                case GasParamFamily::DemandSlope: entity = m.consumers[e].name; break;
                case GasParamFamily::LinearCost:
                case GasParamFamily::QuadraticCost:
                case GasParamFamily::ProductionExpansion: entity = m.suppliers[e].name; break;
                case GasParamFamily::ArcCost:
                case GasParamFamily::ArcExpansion: entity = m.arcs[e].name; break;
            }
            for (std::size_t y = 0; y < as.params.years(); ++y)
                names[as.params.index(f, e, y)] = std::string(to_string(f)) + "[" + entity + ",y" + std::to_string(y + 1) + "]";
        }
    }
    return names;
}

/// dF/dx assembled entry by entry into a rank-2 SparseNdArray; contributions
/// to the same position are summed. Structural zeros are kept.
inline SparseNdArray gas_jacobian_sparse(const detail::GasAssembly& as, const Vector& x, const Vector& th) {
    const auto n = static_cast<SparseNdArray::Extent>(as.vars.size());
    SparseNdArray J({n, n});
    as.assemble(
        x, th, [](std::size_t, double) {},
        [&](std::size_t r, std::size_t c, double v) {
            J.add_entry({static_cast<SparseNdArray::Extent>(r), static_cast<SparseNdArray::Extent>(c)}, v);
        },
        [](std::size_t, std::size_t, double) {});
    J.remove_duplicates();
    return J;
}

/// Same Jacobian written straight into a dense matrix.
inline Matrix gas_jacobian_dense(const detail::GasAssembly& as, const Vector& x, const Vector& th) {
    const auto n = static_cast<Eigen::Index>(as.vars.size());
    Matrix G = Matrix::Zero(n, n);
    as.assemble(
        x, th, [](std::size_t, double) {},
        [&](std::size_t r, std::size_t c, double v) { G(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) += v; },
        [](std::size_t, std::size_t, double) {});
    return G;
}

inline Matrix sparse_to_matrix(const SparseNdArray& A) {
    if (A.rank() != 2) throw ShapeError("sparse_to_matrix: array is not rank 2");
    Matrix M = Matrix::Zero(static_cast<Eigen::Index>(A.shape()[0]), static_cast<Eigen::Index>(A.shape()[1]));
    for (const auto& e : A.iterate()) M(e.position[0], e.position[1]) += e.value;
    return M;
}

/// Fraction of structurally nonzero entries in dF/dx.
inline double gas_jacobian_density(const GasMarket& market) {
    const SparseNdArray J = gas_jacobian_sparse(*market.assembly, market.problem.initial_guess, market.problem.theta_mean);
    const double n = static_cast<double>(market.variables().size());
    return static_cast<double>(J.size()) / (n * n);
}

/// Start point with capacities at their initial values, duals and flows at
/// zero, and prices on the demand curves at zero consumption.
inline Vector gas_initial_guess(const detail::GasAssembly& as) {
    Vector x = Vector::Zero(static_cast<Eigen::Index>(as.vars.size()));
    const auto& m = as.model;
    for (std::size_t i = 0; i < as.vars.size(); ++i) {
        const GasVariableKey& k = as.vars.key(i);
        const auto f = static_cast<std::size_t>(k.first);
        const auto y = static_cast<std::size_t>(k.year);
        auto& xi = x[static_cast<Eigen::Index>(i)];
        switch (k.kind) {
            case GasVar::Cap_py: xi = m.suppliers[f].initial_capacity; break;
            case GasVar::Cap_ay: xi = m.arcs[f].initial_capacity; break;
            case GasVar::Q_py: xi = 0.5 * m.availability * m.suppliers[f].initial_capacity; break;
            case GasVar::pi_cy: xi = m.consumers[f].dem_int[y]; break;
            default: break;
        }
    }
    return x;
}

inline GasMarket build_gas_market(const GasMarketModel& model) {
    auto as = detail::build_gas_assembly(model);
    GasMarket out;
    out.assembly = as;
    ParametrizedNCP& p = out.problem;
    p.n = as->vars.size();
    p.m = as->params.size();
    p.cone = ConeSpec(as->vars.cone_mask());
    p.theta_mean = gas_theta(*as);
    p.variable_names = as->vars.names();
    p.parameter_names = gas_parameter_names(*as);
    p.initial_guess = gas_initial_guess(*as);
    p.eval_F = [as](const Vector& x, const Vector& th) {
        Vector F = Vector::Zero(static_cast<Eigen::Index>(as->vars.size()));
        as->assemble(
            x, th, [&](std::size_t r, double v) { F[static_cast<Eigen::Index>(r)] = v; },
            [](std::size_t, std::size_t, double) {}, [](std::size_t, std::size_t, double) {});
        return F;
    };
    p.eval_G = [as](const Vector& x, const Vector& th) { return sparse_to_matrix(gas_jacobian_sparse(*as, x, th)); };
    p.eval_L = [as](const Vector& x, const Vector& th) {
        Matrix L = Matrix::Zero(static_cast<Eigen::Index>(as->vars.size()), static_cast<Eigen::Index>(as->params.size()));
        as->assemble(
            x, th, [](std::size_t, double) {}, [](std::size_t, std::size_t, double) {},
            [&](std::size_t r, std::size_t d, double v) { L(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) += v; });
        return L;
    };
    p.validate();
    return out;
}

inline ParametrizedNCP make_gas_market(const GasMarketModel& model) { return build_gas_market(model).problem; }

/// Largest absolute residual of each equality family at x.
struct GasResidualReport {
    double market_clearing = 0.0;
    double production_capacity = 0.0;  ///< Cap_py = Q_p0 + sum X_py
    double arc_capacity = 0.0;         ///< Cap_ay = Q_a0 + sum X_ay
    double nodal_balance = 0.0;
    double inverse_demand = 0.0;

    double max() const {
        return std::max({market_clearing, production_capacity, arc_capacity, nodal_balance, inverse_demand});
    }
};

inline GasResidualReport gas_residuals(const GasMarket& market, const Vector& x, const Vector& theta) {
    const Vector F = market.problem.F(x, theta);
    GasResidualReport r;
    for (std::size_t i = 0; i < market.variables().size(); ++i) {
        const double v = std::abs(F[static_cast<Eigen::Index>(i)]);
        switch (market.variables().key(i).kind) {
            case GasVar::pi_ay: r.market_clearing = std::max(r.market_clearing, v); break;
            case GasVar::alpha_c: r.production_capacity = std::max(r.production_capacity, v); break;
            case GasVar::alpha_i: r.arc_capacity = std::max(r.arc_capacity, v); break;
            case GasVar::alpha_d: r.nodal_balance = std::max(r.nodal_balance, v); break;
            case GasVar::pi_cy: r.inverse_demand = std::max(r.inverse_demand, v); break;
            default: break;
        }
    }
    return r;
}

/// Block-diagonal covariance with a Wiener process over the years for every
/// (family, entity) pair: sigma = cv_family * mean over years, Cov = sigma^2 min(t_i, t_j)
/// with t = 1, 2, ... . Families missing from cv are held fixed.
inline CovarianceModel gas_wiener_covariance(const GasMarket& market, const std::map<GasParamFamily, double>& cv) {
    const auto& L = market.parameters();
    const auto Y = static_cast<Eigen::Index>(L.years());
    const Vector times = Vector::LinSpaced(Y, 1.0, static_cast<double>(Y));
    std::vector<CovarianceModel> blocks;
    for (GasParamFamily f : kGasParamFamilies) {
        const auto it = cv.find(f);
        const double level = it == cv.end() ? 0.0 : it->second;
        for (std::size_t e = 0; e < L.entities(f); ++e) {
            const auto first = static_cast<Eigen::Index>(L.index(f, e, 0));
            std::vector<std::string> labels;
            for (Eigen::Index y = 0; y < Y; ++y) labels.push_back(market.problem.parameter_names[static_cast<std::size_t>(first + y)]);
            blocks.push_back(wiener_covariance(market.problem.theta_mean.segment(first, Y), level, times, std::move(labels)));
        }
    }
    return CovarianceModel::block_diagonal(blocks);
}

struct DemandCurve {
    double dem_int = 0.0;
    double dem_slope = 0.0;
};

/// Linear inverse demand through (qty_ref, price_ref) with point elasticity
/// -price / (slope * qty) equal to the target.
inline DemandCurve calibrate_demand(double price_ref, double qty_ref, double elasticity) {
    if (!(qty_ref > 0.0)) throw DomainError("calibrate_demand: reference quantity must be positive");
    if (!(price_ref > 0.0)) throw DomainError("calibrate_demand: reference price must be positive");
    if (!(elasticity > 0.0)) throw DomainError("calibrate_demand: elasticity must be positive");
    DemandCurve d;
    d.dem_slope = -price_ref / (elasticity * qty_ref);
    d.dem_int = price_ref - d.dem_slope * qty_ref;
    return d;
}

}  // namespace scpuq::models
