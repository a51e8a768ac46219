#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cultprobe/intrinsic_metrics.hpp"
#include "cultprobe/matrix.hpp"

namespace cultprobe {

// CSV text builder. Numbers are written with 6 significant digits; fields
// containing a comma, quote or newline are quoted.
class CsvWriter {
public:
    explicit CsvWriter(std::initializer_list<std::string_view> header);
    explicit CsvWriter(const std::vector<std::string>& header);

    CsvWriter& field(std::string_view text);
    CsvWriter& field(double value);
    CsvWriter& field(std::size_t value);
    CsvWriter& field(int value) { return field(static_cast<double>(value)); }
    // Ends the current row; throws if its width differs from the header.
    void end_row();

    const std::string& str() const { return out_; }
    std::size_t rows() const { return rows_; }

private:
    void put(std::string_view raw);
    std::string out_;
    std::size_t width_ = 0;
    std::size_t current_ = 0;
    std::size_t rows_ = 0;
};

std::string csv_escape(std::string_view text);

// Header row of predicted labels after a "truth" corner cell, then one row
// per ground-truth label.
std::string matrix_csv(const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels, const Matrix& m);

struct RadarRow {
    std::string source;
    std::string model;
    std::string language;
    std::string dimension;
    double value = 0.0;
};

// Long format: source,model,language,dimension,value.
std::string radar_csv(std::span<const RadarRow> rows);

struct Histogram {
    std::vector<double> edges;  // bins + 1 edges
    std::vector<std::size_t> counts;
};

// Equal-width bins on [lo, hi]; the last bin includes hi. Values outside the
// range or non-finite are errors.
Histogram histogram(std::span<const double> values, std::size_t bins = 10, double lo = 0.0, double hi = 1.0);
// bin_low,bin_high,count
std::string histogram_csv(const Histogram& h);

// language,x,y,group,group_std_x,group_std_y
std::string culture_map_csv(const CultureMap& map);

// Replaces characters outside [A-Za-z0-9._-] so an id can be used in a
// file name.
std::string file_safe(std::string_view id);

}  // namespace cultprobe
