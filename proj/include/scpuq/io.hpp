#pragma once

// File formats: JSON documents with line-located validation errors and
// labelled CSV matrices written at 17 significant digits.

#include "scpuq/error.hpp"
#include "scpuq/ncp.hpp"

#include "json.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace scpuq::io {

using json = nlohmann::json;

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& text, const std::string& context) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ParseError(context + ": '" + text + "' is not a number");
    }
    while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
    if (used != text.size()) throw ParseError(context + ": '" + text + "' is not a number");
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace detail {

/// Character iterator that tracks the line of the last non-blank character
/// consumed, so SAX events can be mapped back to source lines.
struct LineCountingIterator {
    using iterator_category = std::input_iterator_tag;
    using value_type = char;
    using difference_type = std::ptrdiff_t;
    using pointer = const char*;
    using reference = const char&;

    const char* p = nullptr;
    std::size_t* line = nullptr;
    std::size_t* token_line = nullptr;
    std::size_t* consumed = nullptr;

    reference operator*() const { return *p; }
    LineCountingIterator& operator++() {
        if (*p == '\n')
            ++*line;
        else if (!std::isspace(static_cast<unsigned char>(*p)))
            *token_line = *line;
        ++p;
        ++*consumed;
        return *this;
    }
    LineCountingIterator operator++(int) {
        LineCountingIterator old = *this;
        ++*this;
        return old;
    }
    bool operator==(const LineCountingIterator& o) const { return p == o.p; }
    bool operator!=(const LineCountingIterator& o) const { return p != o.p; }
};

inline std::string escape_pointer_token(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '~')
            out += "~0";
        else if (c == '/')
            out += "~1";
        else
            out += c;
    }
    return out;
}

class LocatingSax : public nlohmann::json_sax<json> {
public:
    LocatingSax(json& root, const std::size_t* token_line, std::map<std::string, std::size_t>& lines)
        : dom_(root, true), token_line_(token_line), lines_(lines) {}

    bool null() override { return scalar([&] { return dom_.null(); }); }
    bool boolean(bool v) override { return scalar([&] { return dom_.boolean(v); }); }
    bool number_integer(number_integer_t v) override { return scalar([&] { return dom_.number_integer(v); }); }
    bool number_unsigned(number_unsigned_t v) override { return scalar([&] { return dom_.number_unsigned(v); }); }
    bool number_float(number_float_t v, const string_t& s) override { return scalar([&] { return dom_.number_float(v, s); }); }
    bool string(string_t& v) override { return scalar([&] { return dom_.string(v); }); }
    bool binary(binary_t& v) override { return scalar([&] { return dom_.binary(v); }); }

    bool start_object(std::size_t n) override {
        open();
        frames_.push_back({true, 0, {}});
        return dom_.start_object(n);
    }
    bool key(string_t& k) override {
        frames_.back().key = k;
        return dom_.key(k);
    }
    bool end_object() override {
        frames_.pop_back();
        close();
        return dom_.end_object();
    }
    bool start_array(std::size_t n) override {
        open();
        frames_.push_back({false, 0, {}});
        return dom_.start_array(n);
    }
    bool end_array() override {
        frames_.pop_back();
        close();
        return dom_.end_array();
    }
    bool parse_error(std::size_t pos, const std::string& tok, const nlohmann::detail::exception& ex) override {
        return dom_.parse_error(pos, tok, ex);
    }

private:
    struct Frame {
        bool object;
        std::size_t index;
        std::string key;
    };

    nlohmann::detail::json_sax_dom_parser<json> dom_;
    const std::size_t* token_line_;
    std::map<std::string, std::size_t>& lines_;
    std::vector<Frame> frames_;

    std::string pointer() const {
        std::string out;
        for (const auto& f : frames_) out += "/" + (f.object ? escape_pointer_token(f.key) : std::to_string(f.index));
        return out;
    }
    void open() { lines_.emplace(pointer(), *token_line_); }
    void close() {
        if (!frames_.empty() && !frames_.back().object) ++frames_.back().index;
    }
    template <class F>
    bool scalar(F&& f) {
        open();
        const bool ok = f();
        close();
        return ok;
    }
};

}  // namespace detail

/// A parsed JSON document that remembers the source line of every value.
struct LocatedJson {
    json doc;
    std::string source;
    std::map<std::string, std::size_t> lines;  ///< JSON pointer -> 1-based line

    std::size_t line(const std::string& pointer) const {
        std::string p = pointer;
        for (;;) {
            const auto it = lines.find(p);
            if (it != lines.end()) return it->second;
            if (p.empty()) return 0;
            p.erase(p.rfind('/'));
        }
    }

    /// "source:line: /pointer: message"
    std::string where(const std::string& pointer) const {
        return source + ":" + std::to_string(line(pointer)) + ": " + (pointer.empty() ? "/" : pointer);
    }
};

inline LocatedJson parse_located_json(const std::string& text, const std::string& source) {
    LocatedJson out;
    out.source = source;
    std::size_t line = 1, token_line = 1, consumed = 0;
    detail::LineCountingIterator first{text.data(), &line, &token_line, &consumed};
    detail::LineCountingIterator last{text.data() + text.size(), &line, &token_line, &consumed};
    detail::LocatingSax sax(out.doc, &token_line, out.lines);
    try {
        json::sax_parse(first, last, &sax);
    } catch (const json::exception& e) {
        // The DOM handler rethrows a copy sliced to json::exception, so the
        // location comes from the iterator rather than parse_error::byte.
        std::size_t l = 1, col = 1;
        for (std::size_t i = 0; i + 1 < consumed && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++l;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ParseError(source + ":" + std::to_string(l) + ":" + std::to_string(col) + ": " + e.what());
    }
    return out;
}

inline LocatedJson load_located_json(const std::string& path) { return parse_located_json(read_file(path), path); }

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError(path + ": cannot write file");
    out << text;
    if (!out) throw ValidationError(path + ": write failed");
}

inline void write_json(const std::string& path, const json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

/// Matrix with optional row and column labels. The CSV form is a header line
/// "label,<col labels>" followed by "<row label>,<values>" lines.
struct LabelledMatrix {
    Matrix values;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    out.push_back(cell);
    return out;
}

inline std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

}  // namespace detail

inline std::string matrix_to_csv(const LabelledMatrix& m) {
    const auto rows = m.values.rows();
    const auto cols = m.values.cols();
    std::ostringstream out;
    out << "label";
    for (Eigen::Index j = 0; j < cols; ++j) {
        const auto k = static_cast<std::size_t>(j);
        out << ',' << detail::csv_cell(k < m.col_labels.size() ? m.col_labels[k] : "c" + std::to_string(j));
    }
    out << '\n';
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto k = static_cast<std::size_t>(i);
        out << detail::csv_cell(k < m.row_labels.size() ? m.row_labels[k] : "r" + std::to_string(i));
        for (Eigen::Index j = 0; j < cols; ++j) out << ',' << format_double(m.values(i, j));
        out << '\n';
    }
    return out.str();
}

inline LabelledMatrix matrix_from_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    LabelledMatrix m;
    if (!std::getline(in, line)) throw ParseError(source + ": empty CSV");
    auto header = detail::split_csv_line(line);
    m.col_labels.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                             " cells, found " + std::to_string(cells.size()));
        m.row_labels.push_back(cells[0]);
        std::vector<double> row;
        for (std::size_t c = 1; c < cells.size(); ++c)
            row.push_back(parse_double(cells[c], source + ":" + std::to_string(lineno)));
        rows.push_back(std::move(row));
    }
    m.values = Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.col_labels.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

inline void write_matrix_csv(const std::string& path, const LabelledMatrix& m) { write_text_file(path, matrix_to_csv(m)); }
inline LabelledMatrix read_matrix_csv(const std::string& path) { return matrix_from_csv(read_file(path), path); }

/// Tidy CSV table: a header row and string cells.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string to_csv() const {
        std::ostringstream out;
        for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << detail::csv_cell(header[j]);
        out << '\n';
        for (const auto& r : rows) {
            for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << detail::csv_cell(r[j]);
            out << '\n';
        }
        return out.str();
    }

    static Table from_csv(const std::string& text, const std::string& source) {
        std::istringstream in(text);
        std::string line;
        Table t;
        if (!std::getline(in, line)) throw ParseError(source + ": empty CSV");
        t.header = detail::split_csv_line(line);
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto cells = detail::split_csv_line(line);
            if (cells.size() != t.header.size())
                throw ParseError(source + ":" + std::to_string(lineno) + ": wrong number of cells");
            t.rows.push_back(std::move(cells));
        }
        return t;
    }

    std::size_t column(const std::string& name) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        throw IndexError("Table: no column '" + name + "'");
    }
};

}  // namespace scpuq::io
