#include "attrlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <utility>

namespace attrlab::synthdata {

namespace {

// Splits one CSV record. Handles quoted fields with doubled quotes; the
// datasets written here never need quoting, but loaded files might.
std::vector<std::string> split_csv_line(const std::string& line, long row_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    if (in_quotes) throw ParseError("unterminated quote", row_no);
    fields.push_back(cur);
    return fields;
}

double parse_cell(const std::string& text, long row_no, long col_no) {
    if (text.empty())
        throw ParseError("empty cell at row " + std::to_string(row_no) + ", column " +
                             std::to_string(col_no),
                         row_no, col_no);
    char* end = nullptr;
    const double value = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size())
        throw ParseError("non-numeric cell \"" + text + "\" at row " + std::to_string(row_no) +
                             ", column " + std::to_string(col_no),
                         row_no, col_no);
    return value;
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Dataset load_csv_impl(const std::string& path, std::size_t target_index,
                      const std::vector<std::string>& header,
                      std::vector<std::vector<std::string>>&& records) {
    const std::size_t width = header.size();
    if (target_index >= width)
        throw ParseError("target column index " + std::to_string(target_index) +
                         " out of range for " + path);

    Dataset out;
    out.names.reserve(width - 1);
    for (std::size_t c = 0; c < width; ++c)
        if (c != target_index) out.names.push_back(header[c]);

    out.features = Matrix(records.size(), width - 1);
    out.target.resize(records.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
        const long row_no = static_cast<long>(r) + 2;  // 1-based, after header
        if (records[r].size() != width)
            throw ParseError("row " + std::to_string(row_no) + " has " +
                                 std::to_string(records[r].size()) + " fields, expected " +
                                 std::to_string(width),
                             row_no);
        std::size_t fc = 0;
        for (std::size_t c = 0; c < width; ++c) {
            const double v = parse_cell(records[r][c], row_no, static_cast<long>(c) + 1);
            if (c == target_index)
                out.target[r] = v;
            else
                out.features(r, fc++) = v;
        }
    }
    return out;
}

std::pair<std::vector<std::string>, std::vector<std::vector<std::string>>> read_records(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing header row in " + path, 1);
    auto header = split_csv_line(line, 1);
    std::vector<std::vector<std::string>> records;
    long row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        records.push_back(split_csv_line(line, row_no));
    }
    return {std::move(header), std::move(records)};
}

}  // namespace

Dataset Dataset::select_rows(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.names = names;
    out.group_of = group_of;
    out.features = Matrix(rows.size(), features.cols());
    out.target.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = features.row(rows[i]);
        auto dst = out.features.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
        out.target[i] = target[rows[i]];
    }
    return out;
}

void Dataset::validate() const {
    if (features.cols() != names.size())
        throw ParameterError("dataset: column count does not match names length");
    if (features.rows() != target.size())
        throw ParameterError("dataset: target length does not match row count");
    if (!group_of.empty() && group_of.size() != names.size())
        throw ParameterError("dataset: group_of length does not match feature count");
    for (double v : features.data())
        if (!std::isfinite(v)) throw ParameterError("dataset: non-finite feature value");
    for (double v : target)
        if (!std::isfinite(v)) throw ParameterError("dataset: non-finite target value");
}

Dataset load_csv(const std::string& path, const std::string& target_column) {
    auto [header, records] = read_records(path);
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == target_column)
            return load_csv_impl(path, c, header, std::move(records));
    throw ParseError("target column \"" + target_column + "\" not found in " + path, 1);
}

Dataset load_csv(const std::string& path, std::size_t target_index) {
    auto [header, records] = read_records(path);
    return load_csv_impl(path, target_index, header, std::move(records));
}

void save_csv(const Dataset& dataset, const std::string& path, const std::string& target_name) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t c = 0; c < dataset.names.size(); ++c) out << dataset.names[c] << ',';
    out << target_name << '\n';
    for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
        for (std::size_t c = 0; c < dataset.n_features(); ++c)
            out << format_value(dataset.features(r, c)) << ',';
        out << format_value(dataset.target[r]) << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace attrlab::synthdata
