#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace factorrisk::csv {

/// A CSV matrix with a header row and a label column. Empty cells are NaN.
struct LabeledMatrix {
    std::string corner;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Eigen::MatrixXd values;
};

/// Throws Error{module, "MalformedCell" | "MalformedHeader" | "FileNotFound"}.
LabeledMatrix read(const std::filesystem::path& path, const std::string& module);
void write(const std::filesystem::path& path, const LabeledMatrix& matrix);

/// Shortest representation that parses back to the identical double.
std::string format_double(double value);
std::optional<double> parse_double(std::string_view text);

std::vector<std::string> split_line(std::string_view line);

}  // namespace factorrisk::csv
