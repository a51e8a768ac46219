#include "cultprobe/report.hpp"

#include <cmath>
#include <map>

#include "cultprobe/error.hpp"
#include "cultprobe/util.hpp"

namespace cultprobe {

std::string csv_escape(std::string_view text) {
    if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

CsvWriter::CsvWriter(std::initializer_list<std::string_view> header) {
    for (auto h : header) field(h);
    end_row();
    rows_ = 0;
}

CsvWriter::CsvWriter(const std::vector<std::string>& header) {
    for (const auto& h : header) field(h);
    end_row();
    rows_ = 0;
}

void CsvWriter::put(std::string_view raw) {
    if (current_ > 0) out_.push_back(',');
    out_ += raw;
    ++current_;
}

CsvWriter& CsvWriter::field(std::string_view text) {
    put(csv_escape(text));
    return *this;
}

CsvWriter& CsvWriter::field(double value) {
    put(format_sig6(value));
    return *this;
}

CsvWriter& CsvWriter::field(std::size_t value) {
    put(std::to_string(value));
    return *this;
}

void CsvWriter::end_row() {
    if (width_ == 0) {
        width_ = current_;
    } else if (current_ != width_) {
        throw Error("csv row has " + std::to_string(current_) + " fields, header has " + std::to_string(width_));
    }
    out_.push_back('\n');
    current_ = 0;
    ++rows_;
}

std::string matrix_csv(const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels, const Matrix& m) {
    if (m.rows() != row_labels.size() || m.cols() != col_labels.size()) throw Error("matrix csv: label count does not match the matrix shape");
    std::vector<std::string> header{"truth"};
    header.insert(header.end(), col_labels.begin(), col_labels.end());
    CsvWriter w(header);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        w.field(row_labels[r]);
        for (std::size_t c = 0; c < m.cols(); ++c) w.field(m(r, c));
        w.end_row();
    }
    return w.str();
}

std::string radar_csv(std::span<const RadarRow> rows) {
    CsvWriter w({"source", "model", "language", "dimension", "value"});
    for (const auto& r : rows) {
        w.field(r.source).field(r.model).field(r.language).field(r.dimension).field(r.value);
        w.end_row();
    }
    return w.str();
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
    if (bins == 0) throw Error("histogram needs at least one bin");
    if (!(hi > lo)) throw Error("histogram range is empty");
    Histogram h;
    h.counts.assign(bins, 0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(b == bins ? hi : lo + width * static_cast<double>(b));
    for (double v : values) {
        if (!std::isfinite(v) || v < lo || v > hi) throw Error("histogram value " + format_sig6(v) + " outside [" + format_sig6(lo) + ", " + format_sig6(hi) + "]");
        auto bin = static_cast<std::size_t>((v - lo) / width);
        if (bin >= bins) bin = bins - 1;
        // Guard against the division landing one bin off an edge.
        while (bin > 0 && v < h.edges[bin]) --bin;
        while (bin + 1 < bins && v >= h.edges[bin + 1]) ++bin;
        ++h.counts[bin];
    }
    return h;
}

std::string histogram_csv(const Histogram& h) {
    CsvWriter w({"bin_low", "bin_high", "count"});
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        w.field(h.edges[b]).field(h.edges[b + 1]).field(h.counts[b]);
        w.end_row();
    }
    return w.str();
}

std::string culture_map_csv(const CultureMap& map) {
    std::map<std::string, const CultureGroupStats*> groups;
    for (const auto& g : map.groups) groups[g.group] = &g;
    CsvWriter w({"language", "x", "y", "group", "group_std_x", "group_std_y"});
    for (const auto& p : map.points) {
        const auto* g = groups.at(p.group);
        w.field(p.language).field(p.x).field(p.y).field(p.group).field(g->std_x).field(g->std_y);
        w.end_row();
    }
    return w.str();
}

std::string file_safe(std::string_view id) {
    std::string out;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
        out.push_back(ok ? c : '_');
    }
    if (out.empty() || out == "." || out == "..") out = "_" + out;
    return out;
}

}  // namespace cultprobe
