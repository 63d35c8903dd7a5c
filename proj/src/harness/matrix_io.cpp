#include "dflow/harness/matrix_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dflow/errors.hpp"

namespace dflow::harness {

namespace {

std::vector<double> parse_row(const std::string& line, const std::string& where)
{
    std::string cleaned = line;
    for (char& ch : cleaned) {
        if (ch == ',' || ch == '\t' || ch == '\r') {
            ch = ' ';
        }
    }
    std::vector<double> row;
    std::istringstream in(cleaned);
    std::string token;
    while (in >> token) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(token, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != token.size()) {
            throw BadMatrixFormat(where + ": cannot parse '" + token + "'");
        }
        row.push_back(v);
    }
    return row;
}

} // namespace

Mat read_matrix(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FileNotFound(path.string());
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        const std::string where = path.string() + ":" + std::to_string(line_no);
        auto row = parse_row(line, where);
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw BadMatrixFormat(where + ": expected " + std::to_string(rows.front().size()) +
                                  " columns, found " + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw BadMatrixFormat(path.string() + ": no data rows");
    }
    Mat m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

void write_matrix(const std::filesystem::path& path, const Mat& m)
{
    std::ofstream out(path);
    if (!out) {
        throw FileNotFound("cannot open " + path.string() + " for writing");
    }
    char buf[32];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            out << (j ? " " : "") << buf;
        }
        out << '\n';
    }
}

Vec read_vector(const std::filesystem::path& path)
{
    const Mat m = read_matrix(path);
    if (m.rows() != 1 && m.cols() != 1) {
        throw BadMatrixFormat(path.string() + ": expected a single row or column, got " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    return m.reshaped();
}

} // namespace dflow::harness
