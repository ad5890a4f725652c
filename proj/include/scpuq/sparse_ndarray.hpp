#pragma once

// Coordinate-format sparse N-dimensional array.
//
// Entries are stored as (position, value) pairs in insertion order. set_entry
// keeps positions unique; add_entry appends blindly and may create
// duplicates, which must be resolved with remove_duplicates before reading a
// single position. flush() and remove_duplicates() leave the entries sorted
// lexicographically by position.

#include "scpuq/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace scpuq {

class SparseNdArray {
public:
    using Extent = std::int64_t;
    using Position = std::vector<Extent>;

    /// Scalar replacement or a reduction over the duplicated values.
    using Combiner = std::variant<double, std::function<double(std::span<const double>)>>;

    static constexpr double kDefaultFlushTol = 1e-5;

    struct Entry {
        Position position;
        double value;
    };

    explicit SparseNdArray(std::vector<Extent> shape) : shape_(std::move(shape)) {
        if (shape_.empty()) {
            throw ShapeError("SparseNdArray: shape must have at least one axis");
        }
        for (std::size_t k = 0; k < shape_.size(); ++k) {
            if (shape_[k] < 1) {
                throw ShapeError("SparseNdArray: extent " + std::to_string(shape_[k]) + " on axis " +
                                 std::to_string(k) + " is not positive");
            }
        }
    }

    /// Builds from a dense row-major buffer, keeping entries with |v| > tol.
    static SparseNdArray from_dense(std::vector<Extent> shape, std::span<const double> dense,
                                    double tol = 0.0) {
        SparseNdArray out(std::move(shape));
        if (static_cast<Extent>(dense.size()) != out.dense_size()) {
            throw ShapeError("SparseNdArray::from_dense: buffer has " + std::to_string(dense.size()) +
                             " values, shape needs " + std::to_string(out.dense_size()));
        }
        for (Extent flat = 0; flat < out.dense_size(); ++flat) {
            const double v = dense[static_cast<std::size_t>(flat)];
            if (std::abs(v) > tol) out.add_entry(out.unflatten(flat), v);
        }
        return out;
    }

    const std::vector<Extent>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }

    /// Number of stored entries (duplicates counted separately).
    std::size_t size() const noexcept { return values_.size(); }

    Extent dense_size() const noexcept {
        return std::accumulate(shape_.begin(), shape_.end(), Extent{1}, std::multiplies<>{});
    }

    /// Overwrites the value at posn, removing any duplicates stored there.
    SparseNdArray& set_entry(const Position& posn, double val) {
        check_position(posn);
        erase_at(posn);
        push(posn, val);
        return *this;
    }

    /// Appends without looking for an existing entry at posn.
    SparseNdArray& add_entry(const Position& posn, double val) {
        check_position(posn);
        push(posn, val);
        return *this;
    }

    double get_entry(const Position& posn) const {
        check_position(posn);
        double found = 0.0;
        std::size_t hits = 0;
        for (std::size_t e = 0; e < values_.size(); ++e) {
            if (matches(e, posn)) {
                found = values_[e];
                ++hits;
            }
        }
        if (hits > 1) {
            throw DuplicatePositionError("SparseNdArray::get_entry: " + std::to_string(hits) +
                                         " entries stored at " + format_position(posn) +
                                         "; call remove_duplicates first");
        }
        return found;
    }

    /// Resolves duplicates at one position.
    SparseNdArray& remove_duplicates_at(const Position& posn, const Combiner& combiner) {
        check_position(posn);
        std::vector<double> dup;
        for (std::size_t e = 0; e < values_.size(); ++e) {
            if (matches(e, posn)) dup.push_back(values_[e]);
        }
        if (dup.size() <= 1) return *this;
        erase_at(posn);
        push(posn, combine(combiner, dup));
        sort_entries();
        return *this;
    }

    /// Resolves duplicates at every position. Default combiner sums.
    SparseNdArray& remove_duplicates(const Combiner& combiner = sum_combiner()) {
        sort_entries();
        std::vector<Extent> coords;
        std::vector<double> values;
        coords.reserve(coords_.size());
        values.reserve(values_.size());
        std::size_t e = 0;
        std::vector<double> group;
        while (e < values_.size()) {
            std::size_t end = e + 1;
            while (end < values_.size() && same_position(e, end)) ++end;
            double v = values_[e];
            if (end - e > 1) {
                group.assign(values_.begin() + static_cast<std::ptrdiff_t>(e),
                             values_.begin() + static_cast<std::ptrdiff_t>(end));
                v = combine(combiner, group);
            }
            coords.insert(coords.end(), coord_begin(e), coord_begin(e) + static_cast<std::ptrdiff_t>(rank()));
            values.push_back(v);
            e = end;
        }
        coords_ = std::move(coords);
        values_ = std::move(values);
        return *this;
    }

    /// Sums duplicates, then drops entries with |value| <= tol.
    SparseNdArray& flush(double tol = kDefaultFlushTol) {
        remove_duplicates();
        std::vector<Extent> coords;
        std::vector<double> values;
        for (std::size_t e = 0; e < values_.size(); ++e) {
            if (std::abs(values_[e]) > tol) {
                coords.insert(coords.end(), coord_begin(e), coord_begin(e) + static_cast<std::ptrdiff_t>(rank()));
                values.push_back(values_[e]);
            }
        }
        coords_ = std::move(coords);
        values_ = std::move(values);
        return *this;
    }

    /// Generalized transpose: exchanges two axes of every position and of the shape.
    SparseNdArray swapaxes(std::size_t axis1, std::size_t axis2) const {
        if (axis1 >= rank() || axis2 >= rank()) {
            throw IndexError("SparseNdArray::swapaxes: axis out of range for rank " + std::to_string(rank()));
        }
        SparseNdArray out = *this;
        std::swap(out.shape_[axis1], out.shape_[axis2]);
        for (std::size_t e = 0; e < out.values_.size(); ++e) {
            auto it = out.coords_.begin() + static_cast<std::ptrdiff_t>(e * rank());
            std::swap(it[static_cast<std::ptrdiff_t>(axis1)], it[static_cast<std::ptrdiff_t>(axis2)]);
        }
        out.sorted_ = false;
        if (sorted_) out.sort_entries();
        return out;
    }

    /// Row-major dense copy; duplicates accumulate.
    std::vector<double> to_dense() const {
        std::vector<double> dense(static_cast<std::size_t>(dense_size()), 0.0);
        for (std::size_t e = 0; e < values_.size(); ++e) {
            dense[static_cast<std::size_t>(flatten_entry(e))] += values_[e];
        }
        return dense;
    }

    /// (position, value) pairs in lexicographic position order.
    std::vector<Entry> iterate() const {
        std::vector<std::size_t> order(values_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [this](std::size_t l, std::size_t r) { return less_position(l, r); });
        std::vector<Entry> out;
        out.reserve(order.size());
        for (std::size_t e : order) {
            out.push_back({Position(coord_begin(e), coord_begin(e) + static_cast<std::ptrdiff_t>(rank())), values_[e]});
        }
        return out;
    }

    /// Row-major flat offset of a position.
    Extent flatten(const Position& posn) const {
        check_position(posn);
        Extent flat = 0;
        for (std::size_t k = 0; k < rank(); ++k) flat = flat * shape_[k] + posn[k];
        return flat;
    }

    Position unflatten(Extent flat) const {
        if (flat < 0 || flat >= dense_size()) throw IndexError("SparseNdArray::unflatten: offset out of range");
        Position p(rank());
        for (std::size_t k = rank(); k-- > 0;) {
            p[k] = flat % shape_[k];
            flat /= shape_[k];
        }
        return p;
    }

    static Combiner sum_combiner() {
        return std::function<double(std::span<const double>)>(
            [](std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); });
    }

    /// Text dump: a "# shape" header, then "i,j,...,k<TAB>value" per entry.
    void write_text(std::ostream& os) const {
        os << "# shape ";
        for (std::size_t k = 0; k < rank(); ++k) os << (k ? "," : "") << shape_[k];
        os << '\n';
        std::ostringstream num;
        num.precision(17);
        for (const auto& [pos, val] : iterate()) {
            for (std::size_t k = 0; k < pos.size(); ++k) os << (k ? "," : "") << pos[k];
            num.str("");
            num << val;
            os << '\t' << num.str() << '\n';
        }
    }

    static SparseNdArray read_text(std::istream& is) {
        std::string line;
        if (!std::getline(is, line) || line.rfind("# shape ", 0) != 0) {
            throw ParseError("SparseNdArray::read_text: missing '# shape' header");
        }
        SparseNdArray out(parse_tuple(line.substr(8), 1));
        std::size_t lineno = 1;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) {
                throw ParseError("SparseNdArray::read_text: line " + std::to_string(lineno) + " has no tab");
            }
            Position pos = parse_tuple(line.substr(0, tab), lineno);
            double val = 0.0;
            try {
                val = std::stod(line.substr(tab + 1));
            } catch (const std::exception&) {
                throw ParseError("SparseNdArray::read_text: bad value on line " + std::to_string(lineno));
            }
            out.add_entry(pos, val);
        }
        return out;
    }

private:
    std::vector<Extent> shape_;
    std::vector<Extent> coords_;  // size() * rank() coordinates, entry-major
    std::vector<double> values_;
    bool sorted_ = true;

    std::vector<Extent>::const_iterator coord_begin(std::size_t e) const { return coords_.begin() + static_cast<std::ptrdiff_t>(e * rank()); }

    void check_position(const Position& posn) const {
        if (posn.size() != rank()) {
            throw IndexError("SparseNdArray: position " + format_position(posn) + " has length " +
                             std::to_string(posn.size()) + ", array rank is " + std::to_string(rank()));
        }
        for (std::size_t k = 0; k < rank(); ++k) {
            if (posn[k] < 0 || posn[k] >= shape_[k]) {
                throw IndexError("SparseNdArray: position " + format_position(posn) + " out of bounds on axis " +
                                 std::to_string(k));
            }
        }
    }

    void push(const Position& posn, double val) {
        if (!values_.empty() && sorted_) {
            const auto last = coord_begin(values_.size() - 1);
            sorted_ = std::lexicographical_compare(last, last + static_cast<std::ptrdiff_t>(rank()), posn.begin(),
                                                   posn.end());
        }
        coords_.insert(coords_.end(), posn.begin(), posn.end());
        values_.push_back(val);
    }

    bool matches(std::size_t e, const Position& posn) const {
        return std::equal(posn.begin(), posn.end(), coord_begin(e));
    }

    bool same_position(std::size_t a, std::size_t b) const {
        return std::equal(coord_begin(a), coord_begin(a) + static_cast<std::ptrdiff_t>(rank()), coord_begin(b));
    }

    bool less_position(std::size_t a, std::size_t b) const {
        return std::lexicographical_compare(coord_begin(a), coord_begin(a) + static_cast<std::ptrdiff_t>(rank()),
                                            coord_begin(b), coord_begin(b) + static_cast<std::ptrdiff_t>(rank()));
    }

    Extent flatten_entry(std::size_t e) const {
        Extent flat = 0;
        auto it = coord_begin(e);
        for (std::size_t k = 0; k < rank(); ++k) flat = flat * shape_[k] + it[static_cast<std::ptrdiff_t>(k)];
        return flat;
    }

    void erase_at(const Position& posn) {
        std::size_t keep = 0;
        for (std::size_t e = 0; e < values_.size(); ++e) {
            if (matches(e, posn)) continue;
            if (keep != e) {
                std::copy(coord_begin(e), coord_begin(e) + static_cast<std::ptrdiff_t>(rank()),
                          coords_.begin() + static_cast<std::ptrdiff_t>(keep * rank()));
                values_[keep] = values_[e];
            }
            ++keep;
        }
        coords_.resize(keep * rank());
        values_.resize(keep);
    }

    void sort_entries() {
        if (sorted_) return;
        std::vector<std::size_t> order(values_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [this](std::size_t l, std::size_t r) { return less_position(l, r); });
        std::vector<Extent> coords;
        std::vector<double> values;
        coords.reserve(coords_.size());
        values.reserve(values_.size());
        for (std::size_t e : order) {
            coords.insert(coords.end(), coord_begin(e), coord_begin(e) + static_cast<std::ptrdiff_t>(rank()));
            values.push_back(values_[e]);
        }
        coords_ = std::move(coords);
        values_ = std::move(values);
        sorted_ = true;
    }

    static double combine(const Combiner& combiner, std::span<const double> values) {
        if (const double* scalar = std::get_if<double>(&combiner)) return *scalar;
        return std::get<1>(combiner)(values);
    }

    static std::string format_position(const Position& posn) {
        std::string s = "(";
        for (std::size_t k = 0; k < posn.size(); ++k) s += (k ? "," : "") + std::to_string(posn[k]);
        return s + ")";
    }

    static Position parse_tuple(const std::string& text, std::size_t lineno) {
        Position out;
        std::stringstream ss(text);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                out.push_back(std::stoll(tok));
            } catch (const std::exception&) {
                throw ParseError("SparseNdArray::read_text: bad integer '" + tok + "' on line " +
                                 std::to_string(lineno));
            }
        }
        return out;
    }
};

}  // namespace scpuq
