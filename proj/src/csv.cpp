#include "factorrisk/csv.hpp"

#include "factorrisk/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace factorrisk::csv {

std::vector<std::string> split_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.emplace_back(line.substr(start));
            break;
        }
        cells.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    for (auto& cell : cells) {
        const auto first = cell.find_first_not_of(" \t");
        const auto last = cell.find_last_not_of(" \t");
        cell = first == std::string::npos ? std::string{} : cell.substr(first, last - first + 1);
    }
    return cells;
}

std::string format_double(double value) {
    if (std::isnan(value)) return {};
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view text) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty()) return std::nullopt;
    return value;
}

LabeledMatrix read(const std::filesystem::path& path, const std::string& module) {
    std::ifstream in(path);
    if (!in) throw Error(module, "FileNotFound", "cannot open file", {{"path", path.string()}});

    LabeledMatrix out;
    std::string line;
    if (!std::getline(in, line)) throw Error(module, "MalformedHeader", "missing header row", {{"path", path.string()}});
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    auto header = split_line(line);
    out.corner = header.front();
    out.col_labels.assign(header.begin() + 1, header.end());
    const std::size_t ncols = out.col_labels.size();

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_line(line);
        if (cells.size() != ncols + 1) {
            throw Error(module, "MalformedCell", "row has wrong number of cells",
                        {{"path", path.string()}, {"line", std::to_string(line_no)}});
        }
        std::vector<double> row(ncols, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t j = 0; j < ncols; ++j) {
            const auto& cell = cells[j + 1];
            if (cell.empty()) continue;
            auto v = parse_double(cell);
            if (!v) {
                throw Error(module, "MalformedCell", "non-numeric cell",
                            {{"path", path.string()}, {"line", std::to_string(line_no)},
                             {"column", out.col_labels[j]}, {"cell", cell}});
            }
            row[j] = *v;
        }
        out.row_labels.push_back(cells.front());
        rows.push_back(std::move(row));
    }

    out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncols));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < ncols; ++j) out.values(i, j) = rows[i][j];
    return out;
}

void write(const std::filesystem::path& path, const LabeledMatrix& matrix) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ostringstream os;
    os << matrix.corner;
    for (const auto& c : matrix.col_labels) os << ',' << c;
    os << '\n';
    for (Eigen::Index i = 0; i < matrix.values.rows(); ++i) {
        os << matrix.row_labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < matrix.values.cols(); ++j) os << ',' << format_double(matrix.values(i, j));
        os << '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("panel_store", "WriteFailed", "cannot write file", {{"path", path.string()}});
    out << os.str();
}

}  // namespace factorrisk::csv
