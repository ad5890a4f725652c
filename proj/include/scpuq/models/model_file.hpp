#pragma once

// JSON model files. Every file has the shape
//   {"type": "oligopoly" | "gas", "description": ..., "units": {...},
//    "sets": {...}, "parameters": {...}, "theta_spec": {...}}
// and is validated strictly: unknown keys, missing keys and wrong types are
// reported with the source line and JSON pointer of the offending value.
// See models/README.md for the full schema.

#include "scpuq/error.hpp"
#include "scpuq/io.hpp"
#include "scpuq/models/gas_market.hpp"
#include "scpuq/models/oligopoly.hpp"
#include "scpuq/uq.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace scpuq::models {

using io::json;

namespace detail {

/// Typed accessors over a LocatedJson that raise located errors.
class Reader {
public:
    explicit Reader(const io::LocatedJson& src) : src_(src) {}

    [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
        throw ValidationError(src_.where(ptr) + ": " + msg);
    }

    const json& at(const std::string& ptr) const { return src_.doc.at(json::json_pointer(ptr)); }
    bool has(const std::string& ptr) const { return src_.doc.contains(json::json_pointer(ptr)); }

    const json& object(const std::string& ptr, const std::set<std::string>& required,
                       const std::set<std::string>& optional = {}) const {
        if (!has(ptr)) fail(parent(ptr), "missing key '" + leaf(ptr) + "'");
        const json& j = at(ptr);
        if (!j.is_object()) fail(ptr, "expected an object");
        for (const auto& k : required)
            if (!j.contains(k)) fail(ptr, "missing key '" + k + "'");
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!required.count(it.key()) && !optional.count(it.key()))
                fail(ptr + "/" + it.key(), "unknown key '" + it.key() + "'");
        return j;
    }

    /// Object with arbitrary keys.
    const json& map(const std::string& ptr) const {
        if (!has(ptr)) fail(parent(ptr), "missing key '" + leaf(ptr) + "'");
        const json& j = at(ptr);
        if (!j.is_object()) fail(ptr, "expected an object");
        return j;
    }

    double number(const std::string& ptr) const {
        if (!has(ptr)) fail(parent(ptr), "missing key '" + leaf(ptr) + "'");
        const json& j = at(ptr);
        if (!j.is_number()) fail(ptr, "expected a number");
        return j.get<double>();
    }

    std::string string(const std::string& ptr) const {
        if (!has(ptr)) fail(parent(ptr), "missing key '" + leaf(ptr) + "'");
        const json& j = at(ptr);
        if (!j.is_string() || j.get<std::string>().empty()) fail(ptr, "expected a non-empty string");
        return j.get<std::string>();
    }

    std::size_t count(const std::string& ptr) const {
        const double v = number(ptr);
        if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) fail(ptr, "expected a positive integer");
        return static_cast<std::size_t>(v);
    }

    std::vector<double> numbers(const std::string& ptr, std::optional<std::size_t> expected = std::nullopt) const {
        if (!has(ptr)) fail(parent(ptr), "missing key '" + leaf(ptr) + "'");
        const json& j = at(ptr);
        if (!j.is_array()) fail(ptr, "expected an array of numbers");
        if (expected && j.size() != *expected)
            fail(ptr, "expected " + std::to_string(*expected) + " values, found " + std::to_string(j.size()));
        std::vector<double> out;
        for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(ptr + "/" + std::to_string(i)));
        return out;
    }

    std::vector<std::string> strings(const std::string& ptr) const {
        if (!has(ptr)) fail(parent(ptr), "missing key '" + leaf(ptr) + "'");
        const json& j = at(ptr);
        if (!j.is_array() || j.empty()) fail(ptr, "expected a non-empty array of strings");
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (std::size_t i = 0; i < j.size(); ++i) {
            out.push_back(string(ptr + "/" + std::to_string(i)));
            if (!seen.insert(out.back()).second) fail(ptr + "/" + std::to_string(i), "duplicate name '" + out.back() + "'");
        }
        return out;
    }

    std::size_t array_size(const std::string& ptr) const {
        if (!has(ptr)) fail(parent(ptr), "missing key '" + leaf(ptr) + "'");
        const json& j = at(ptr);
        if (!j.is_array() || j.empty()) fail(ptr, "expected a non-empty array");
        return j.size();
    }

    const io::LocatedJson& source() const noexcept { return src_; }

private:
    const io::LocatedJson& src_;

    static std::string parent(const std::string& ptr) { return ptr.substr(0, ptr.rfind('/')); }
    static std::string leaf(const std::string& ptr) { return ptr.substr(ptr.rfind('/') + 1); }
};

}  // namespace detail

struct LoadedModel {
    std::string type;  ///< "oligopoly" or "gas"
    std::string description;
    std::map<std::string, std::string> units;
    ParametrizedNCP problem;
    std::optional<OligopolyConfig> oligopoly;
    std::optional<GasMarket> gas;
    std::optional<CovarianceModel> default_covariance;  ///< from theta_spec, when given
};

namespace detail {

inline std::map<std::string, std::string> read_units(const Reader& r) {
    const json& u = r.object("/units", {"quantity", "price"});
    std::map<std::string, std::string> out;
    for (auto it = u.begin(); it != u.end(); ++it) out[it.key()] = r.string("/units/" + it.key());
    return out;
}

inline OligopolyConfig read_oligopoly(const Reader& r) {
    r.object("/sets", {"players"});
    const auto players = r.strings("/sets/players");
    r.object("/parameters", {"a", "b", "gamma"});
    OligopolyConfig cfg;
    cfg.a = r.number("/parameters/a");
    cfg.b = r.number("/parameters/b");
    cfg.gamma = r.numbers("/parameters/gamma", players.size());
    if (!(cfg.b < 0.0)) r.fail("/parameters/b", "demand slope b must be negative");
    if (!(cfg.a > 0.0)) r.fail("/parameters/a", "demand intercept a must be positive");
    return cfg;
}

inline GasMarketModel read_gas(const Reader& r) {
    GasMarketModel m;
    r.object("/sets", {"nodes", "years", "suppliers", "consumers"}, {"arcs"});
    m.nodes = r.strings("/sets/nodes");
    const std::size_t Y = r.count("/sets/years");
    const std::set<std::string> node_set(m.nodes.begin(), m.nodes.end());
    auto node_ref = [&](const std::string& ptr) {
        const std::string n = r.string(ptr);
        if (!node_set.count(n)) r.fail(ptr, "unknown node '" + n + "'");
        return n;
    };

    r.object("/parameters", {"discount", "suppliers", "consumers"}, {"availability", "arcs"});
    m.discount = r.numbers("/parameters/discount", Y);
    if (r.has("/parameters/availability")) m.availability = r.number("/parameters/availability");

    auto entity_params = [&](const std::string& group, const std::string& name) {
        const std::string ptr = "/parameters/" + group + "/" + io::detail::escape_pointer_token(name);
        if (!r.has(ptr)) r.fail("/parameters/" + group, "missing parameters for " + group + " element '" + name + "'");
        return ptr;
    };

    const std::size_t P = r.array_size("/sets/suppliers");
    std::set<std::string> listed;
    for (std::size_t i = 0; i < P; ++i) {
        const std::string sp = "/sets/suppliers/" + std::to_string(i);
        r.object(sp, {"name", "node"});
        GasSupplier s;
        s.name = r.string(sp + "/name");
        s.node = node_ref(sp + "/node");
        const std::string pp = entity_params("suppliers", s.name);
        r.object(pp, {"initial_capacity", "lin", "quad", "expansion_price"}, {"loss", "glb"});
        s.initial_capacity = r.number(pp + "/initial_capacity");
        if (r.has(pp + "/loss")) s.loss = r.number(pp + "/loss");
        if (r.has(pp + "/glb")) s.glb = r.number(pp + "/glb");
        if (s.glb < 0.0) r.fail(pp + "/glb", "Golombek g must be nonnegative");
        s.lin = r.numbers(pp + "/lin", Y);
        s.quad = r.numbers(pp + "/quad", Y);
        s.expansion_price = r.numbers(pp + "/expansion_price", Y);
        listed.insert(s.name);
        m.suppliers.push_back(std::move(s));
    }

    const std::size_t C = r.array_size("/sets/consumers");
    for (std::size_t i = 0; i < C; ++i) {
        const std::string sp = "/sets/consumers/" + std::to_string(i);
        r.object(sp, {"name", "node"});
        GasConsumer c;
        c.name = r.string(sp + "/name");
        c.node = node_ref(sp + "/node");
        const std::string pp = entity_params("consumers", c.name);
        r.object(pp, {"dem_int", "dem_slope"});
        c.dem_int = r.numbers(pp + "/dem_int", Y);
        c.dem_slope = r.numbers(pp + "/dem_slope", Y);
        for (std::size_t y = 0; y < Y; ++y)
            if (!(c.dem_slope[y] < 0.0)) r.fail(pp + "/dem_slope/" + std::to_string(y), "demand slope must be negative");
        m.consumers.push_back(std::move(c));
    }

    if (r.has("/sets/arcs")) {
        const std::size_t A = r.array_size("/sets/arcs");
        for (std::size_t i = 0; i < A; ++i) {
            const std::string sp = "/sets/arcs/" + std::to_string(i);
            r.object(sp, {"name", "from", "to"});
            GasArc a;
            a.name = r.string(sp + "/name");
            a.from = node_ref(sp + "/from");
            a.to = node_ref(sp + "/to");
            if (a.from == a.to) r.fail(sp, "arc leaves and enters the same node");
            const std::string pp = entity_params("arcs", a.name);
            r.object(pp, {"initial_capacity", "cost", "expansion_price"}, {"loss"});
            a.initial_capacity = r.number(pp + "/initial_capacity");
            if (r.has(pp + "/loss")) a.loss = r.number(pp + "/loss");
            a.cost = r.numbers(pp + "/cost", Y);
            a.expansion_price = r.numbers(pp + "/expansion_price", Y);
            m.arcs.push_back(std::move(a));
        }
    }

    for (const std::string group : {"suppliers", "consumers", "arcs"}) {
        if (!r.has("/parameters/" + group)) continue;
        std::set<std::string> names;
        if (group == "suppliers")
            for (const auto& s : m.suppliers) names.insert(s.name);
        else if (group == "consumers")
            for (const auto& c : m.consumers) names.insert(c.name);
        else
            for (const auto& a : m.arcs) names.insert(a.name);
        const json& j = r.map("/parameters/" + group);
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!names.count(it.key()))
                r.fail("/parameters/" + group + "/" + io::detail::escape_pointer_token(it.key()),
                       "parameters given for unknown " + group + " element '" + it.key() + "'");
    }

    try {
        m.validate();
    } catch (const ValidationError& e) {
        r.fail("/parameters", e.what());
    }
    return m;
}

/// Covariance from a JSON object at ptr: {"cv": x}, {"variances": [...]},
/// {"matrix": [[...]]} or, for gas models, {"wiener_cv": {family: cv}}.
inline CovarianceModel read_covariance(const Reader& r, const std::string& ptr, const LoadedModel& model) {
    const ParametrizedNCP& p = model.problem;
    r.object(ptr, {}, {"cv", "variances", "matrix", "wiener_cv", "correlations", "labels"});
    const json& j = r.at(ptr);
    const int sources = static_cast<int>(j.contains("cv")) + static_cast<int>(j.contains("variances")) +
                        static_cast<int>(j.contains("matrix")) + static_cast<int>(j.contains("wiener_cv"));
    if (sources != 1) r.fail(ptr, "give exactly one of 'cv', 'variances', 'matrix', 'wiener_cv'");
    const auto m = static_cast<Eigen::Index>(p.m);
    std::optional<CovarianceModel> C;
    try {
        if (j.contains("cv")) {
            const double cv = r.number(ptr + "/cv");
            if (cv < 0.0) r.fail(ptr + "/cv", "cv must be nonnegative");
            C = CovarianceModel::from_cv(p.theta_mean, cv, p.parameter_names);
        } else if (j.contains("variances")) {
            const auto v = r.numbers(ptr + "/variances", p.m);
            for (std::size_t d = 0; d < v.size(); ++d)
                if (v[d] < 0.0) r.fail(ptr + "/variances/" + std::to_string(d), "variance must be nonnegative");
            C = CovarianceModel::diagonal(Eigen::Map<const Vector>(v.data(), m), p.parameter_names);
        } else if (j.contains("matrix")) {
            if (r.array_size(ptr + "/matrix") != p.m) r.fail(ptr + "/matrix", "expected " + std::to_string(p.m) + " rows");
            Matrix M(m, m);
            for (Eigen::Index i = 0; i < m; ++i) {
                const auto row = r.numbers(ptr + "/matrix/" + std::to_string(i), p.m);
                for (Eigen::Index k = 0; k < m; ++k) M(i, k) = row[static_cast<std::size_t>(k)];
            }
            C = CovarianceModel(std::move(M), p.parameter_names);
        } else {
            if (!model.gas) r.fail(ptr + "/wiener_cv", "Wiener covariance needs a gas model");
            const json& w = r.map(ptr + "/wiener_cv");
            std::map<GasParamFamily, double> cv;
            for (auto it = w.begin(); it != w.end(); ++it) {
                const auto fam = gas_param_family_from_string(it.key());
                if (!fam) r.fail(ptr + "/wiener_cv/" + it.key(), "unknown parameter family '" + it.key() + "'");
                cv[*fam] = r.number(ptr + "/wiener_cv/" + it.key());
                if (cv[*fam] < 0.0) r.fail(ptr + "/wiener_cv/" + it.key(), "cv must be nonnegative");
            }
            C = gas_wiener_covariance(*model.gas, cv);
        }
        if (j.contains("correlations")) {
            const std::string cp = ptr + "/correlations";
            const std::size_t k = r.array_size(cp);
            for (std::size_t e = 0; e < k; ++e) {
                const std::string ep = cp + "/" + std::to_string(e);
                r.object(ep, {"i", "j", "rho"});
                const double i = r.number(ep + "/i"), jj = r.number(ep + "/j");
                if (i < 0 || jj < 0 || i >= static_cast<double>(p.m) || jj >= static_cast<double>(p.m))
                    r.fail(ep, "parameter index out of range");
                C = C->with_correlation(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(jj), r.number(ep + "/rho"));
            }
        }
    } catch (const ShapeError& e) {
        r.fail(ptr, e.what());
    } catch (const DomainError& e) {
        r.fail(ptr, e.what());
    } catch (const ValidationError& e) {
        const std::string what = e.what();
        if (what.rfind(r.source().source, 0) == 0) throw;
        r.fail(ptr, what);
    }
    return *C;
}

}  // namespace detail

inline LoadedModel load_model(const io::LocatedJson& src) {
    detail::Reader r(src);
    r.object("", {"type", "units", "sets", "parameters"}, {"description", "theta_spec"});
    LoadedModel out;
    out.type = r.string("/type");
    if (r.has("/description")) out.description = r.string("/description");
    out.units = detail::read_units(r);
    if (out.type == "oligopoly") {
        out.oligopoly = detail::read_oligopoly(r);
        out.problem = make_oligopoly(*out.oligopoly);
        out.problem.variable_names = r.strings("/sets/players");
    } else if (out.type == "gas") {
        out.gas = build_gas_market(detail::read_gas(r));
        out.problem = out.gas->problem;
    } else {
        r.fail("/type", "unknown model type '" + out.type + "' (expected 'oligopoly' or 'gas')");
    }
    if (r.has("/theta_spec")) {
        r.object("/theta_spec", {}, {"covariance"});
        if (r.has("/theta_spec/covariance")) out.default_covariance = detail::read_covariance(r, "/theta_spec/covariance", out);
    }
    return out;
}

inline LoadedModel load_model_file(const std::string& path) { return load_model(io::load_located_json(path)); }

/// Stand-alone covariance file with the same forms as theta_spec.covariance.
inline CovarianceModel load_covariance_file(const std::string& path, const LoadedModel& model) {
    const io::LocatedJson src = io::load_located_json(path);
    return detail::read_covariance(detail::Reader(src), "", model);
}

}  // namespace scpuq::models
