#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace clens {

/// Accuracy per (row, column) parameter pair, with spread over realisations.
struct AccuracyGrid {
    std::string row_label = "beta";
    std::string col_label = "phi";
    std::vector<double> rows; ///< ascending
    std::vector<double> cols; ///< ascending
    std::vector<std::vector<double>> value;
    std::vector<std::vector<double>> stddev;
    std::vector<std::vector<std::size_t>> n; ///< realisations per cell

    AccuracyGrid() = default;
    AccuracyGrid(std::string row_label, std::string col_label, std::vector<double> rows, std::vector<double> cols);

    /// Mean over cells that hold at least one realisation.
    double mean() const;
    double min() const;
    /// Fills cell (i, j) from per-realisation values.
    void set(std::size_t i, std::size_t j, const std::vector<double>& samples);

    bool operator==(const AccuracyGrid&) const = default;
};

/// Long format: "<row_label>,<col_label>,value,std,n", full precision.
void write_grid_csv(const AccuracyGrid& g, std::ostream& out);
AccuracyGrid read_grid_csv(std::istream& in, const std::string& source);

/// Writes path (CSV) and, when svg is true, the same name with .svg: a
/// heatmap with rows ascending bottom to top and annotated cells.
void emit_heatmap(const AccuracyGrid& g, const std::filesystem::path& path, bool svg = true,
                  const std::string& title = "");

} // namespace clens
