#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

/// Minimal static SVG charts.
namespace factorrisk::svg {

struct Series {
    std::string name;
    std::vector<double> values;
};

/// Line chart over a shared x axis; `x_labels` (optional) annotate the first and last points.
std::string line_chart(const std::string& title, const std::vector<Series>& series,
                       const std::vector<std::string>& x_labels = {});

/// Bar chart with an optional horizontal reference line.
std::string bar_chart(const std::string& title, const std::vector<std::string>& labels, const std::vector<double>& values,
                      std::optional<double> reference = std::nullopt);

void write_file(const std::filesystem::path& path, const std::string& svg);

}  // namespace factorrisk::svg
