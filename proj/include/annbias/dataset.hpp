#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "annbias/errors.hpp"
#include "annbias/nncore.hpp"

namespace annbias {

// Feature matrix + binary click labels, optionally with per-row position
// ({1,2}) and position-CTR value b (feedback-loop data only). b and position
// are absent when their containers are empty.
struct Dataset {
    Matrix X;
    Vector y;
    Vector b;                    // empty when absent
    std::vector<int> position;   // empty when absent

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index n_features() const { return X.cols(); }
    bool has_b() const { return b.size() == X.rows() && X.rows() > 0; }
    bool has_position() const {
        return static_cast<Eigen::Index>(position.size()) == X.rows() && X.rows() > 0;
    }

    void validate() const {
        if (y.size() != X.rows()) throw InputError("Dataset: X/y row counts disagree");
        if (b.size() != 0 && b.size() != X.rows())
            throw InputError("Dataset: b present for some rows only");
        if (!position.empty() && static_cast<Eigen::Index>(position.size()) != X.rows())
            throw InputError("Dataset: position present for some rows only");
        for (Eigen::Index i = 0; i < y.size(); ++i)
            if (y[i] != 0.0 && y[i] != 1.0)
                throw InputError("Dataset: label at row " + std::to_string(i) + " is not 0/1");
        for (Eigen::Index i = 0; i < b.size(); ++i)
            if (!(b[i] >= 0.0 && b[i] <= 1.0))
                throw InputError("Dataset: b at row " + std::to_string(i) + " outside [0,1]");
        for (std::size_t i = 0; i < position.size(); ++i)
            if (position[i] != 1 && position[i] != 2)
                throw InputError("Dataset: position at row " + std::to_string(i) + " not in {1,2}");
    }
};

// Concatenates rows of two datasets (field presence must agree).
inline Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.n() == 0) return b;
    if (b.n() == 0) return a;
    if (a.n_features() != b.n_features()) throw InputError("concat: feature dims disagree");
    if (a.has_b() != b.has_b() || a.has_position() != b.has_position())
        throw InputError("concat: optional field presence disagrees");
    Dataset out;
    out.X.resize(a.n() + b.n(), a.n_features());
    out.X << a.X, b.X;
    out.y.resize(a.n() + b.n());
    out.y << a.y, b.y;
    if (a.has_b()) {
        out.b.resize(a.n() + b.n());
        out.b << a.b, b.b;
    }
    if (a.has_position()) {
        out.position = a.position;
        out.position.insert(out.position.end(), b.position.begin(), b.position.end());
    }
    return out;
}

namespace detail {

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(std::string_view field, std::size_t line_no, const char* what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " value '"
                         + std::string(field) + "'");
    return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

}  // namespace detail

// CSV schema: header `f0,...,f{d-1},label,position,b`; floats with 17
// significant digits; LF line endings; empty position/b cells mean the field
// is absent (consistently for the whole file).
inline void export_dataset(const Dataset& data, const std::string& path) {
    data.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("export_dataset: cannot open " + path);
    for (Eigen::Index j = 0; j < data.n_features(); ++j) out << "f" << j << ",";
    out << "label,position,b\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        for (Eigen::Index j = 0; j < data.n_features(); ++j)
            out << detail::format_g17(data.X(i, j)) << ",";
        out << static_cast<int>(data.y[i]) << ",";
        if (data.has_position()) out << data.position[static_cast<std::size_t>(i)];
        out << ",";
        if (data.has_b()) out << detail::format_g17(data.b[i]);
        out << "\n";
    }
    if (!out) throw IoError("export_dataset: write failed for " + path);
}

inline Dataset import_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("import_dataset: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("line 1: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = detail::split_csv(line);
    if (header.size() < 4 || header[header.size() - 3] != "label"
        || header[header.size() - 2] != "position" || header.back() != "b")
        throw ParseError("line 1: header must be f0,...,label,position,b");
    const std::size_t d = header.size() - 3;
    for (std::size_t j = 0; j < d; ++j)
        if (header[j] != "f" + std::to_string(j))
            throw ParseError("line 1: unexpected feature column '" + std::string(header[j]) + "'");

    std::vector<std::vector<double>> features;
    std::vector<double> labels, b_vals;
    std::vector<int> positions;
    bool saw_b = false, saw_pos = false;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_csv(line);
        if (fields.size() != d + 3)
            throw ParseError("line " + std::to_string(line_no) + ": expected "
                             + std::to_string(d + 3) + " fields, got "
                             + std::to_string(fields.size()));
        std::vector<double> row(d);
        for (std::size_t j = 0; j < d; ++j)
            row[j] = detail::parse_double(fields[j], line_no, "feature");
        double label = detail::parse_double(fields[d], line_no, "label");
        if (label != 0.0 && label != 1.0)
            throw ParseError("line " + std::to_string(line_no) + ": label must be 0 or 1, got '"
                             + std::string(fields[d]) + "'");
        const bool row_has_pos = !fields[d + 1].empty();
        const bool row_has_b = !fields[d + 2].empty();
        if (features.empty()) {
            saw_pos = row_has_pos;
            saw_b = row_has_b;
        } else if (row_has_pos != saw_pos || row_has_b != saw_b) {
            throw ParseError("line " + std::to_string(line_no)
                             + ": optional position/b fields must be present on all rows or none");
        }
        if (row_has_pos) {
            double p = detail::parse_double(fields[d + 1], line_no, "position");
            if (p != 1.0 && p != 2.0)
                throw ParseError("line " + std::to_string(line_no) + ": position must be 1 or 2");
            positions.push_back(static_cast<int>(p));
        }
        if (row_has_b) {
            double bv = detail::parse_double(fields[d + 2], line_no, "b");
            if (!(bv >= 0.0 && bv <= 1.0))
                throw ParseError("line " + std::to_string(line_no) + ": b outside [0,1]");
            b_vals.push_back(bv);
        }
        features.push_back(std::move(row));
        labels.push_back(label);
    }

    Dataset out;
    const Eigen::Index n = static_cast<Eigen::Index>(features.size());
    out.X.resize(n, static_cast<Eigen::Index>(d));
    out.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j)
            out.X(i, static_cast<Eigen::Index>(j)) = features[static_cast<std::size_t>(i)][j];
        out.y[i] = labels[static_cast<std::size_t>(i)];
    }
    if (saw_b) out.b = Eigen::Map<const Vector>(b_vals.data(), n);
    if (saw_pos) out.position = std::move(positions);
    return out;
}

}  // namespace annbias
