#include "cultprobe/human_eval.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <tuple>

#include <json.hpp>

#include "cultprobe/error.hpp"
#include "cultprobe/extrinsic.hpp"
#include "cultprobe/util.hpp"

namespace cultprobe {

namespace {

// Splits one CSV record; supports double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back().push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back().push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back().push_back(c);
        }
    }
    if (quoted) throw Error("annotations line " + std::to_string(line_no) + ": unterminated quote");
    for (auto& f : fields) f = std::string(trim(f));
    return fields;
}

}  // namespace

std::vector<Annotation> parse_annotations_csv(std::string_view text) {
    std::vector<Annotation> rows;
    std::size_t line_no = 0;
    std::size_t start = 0;
    bool header_seen = false;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line, line_no);
        if (!header_seen) {
            if (fields != std::vector<std::string>{"item_id", "annotator_id", "question_id", "label"})
                throw Error("annotations: header must be item_id,annotator_id,question_id,label");
            header_seen = true;
            continue;
        }
        if (fields.size() != 4)
            throw Error("annotations line " + std::to_string(line_no) + ": expected 4 fields, got " + std::to_string(fields.size()));
        for (const auto& f : fields) {
            if (f.empty()) throw Error("annotations line " + std::to_string(line_no) + ": empty field");
        }
        rows.push_back({fields[0], fields[1], fields[2], fields[3]});
    }
    if (!header_seen) throw Error("annotations: missing header");
    return rows;
}

AnnotationTable make_annotation_table(std::vector<std::string> categories, std::vector<std::vector<std::size_t>> counts,
                                      std::vector<std::string> item_ids) {
    if (categories.empty()) throw Error("annotation table needs at least one category");
    if (counts.empty()) throw Error("annotation table needs at least one item");
    if (item_ids.empty()) {
        for (std::size_t i = 0; i < counts.size(); ++i) item_ids.push_back(std::to_string(i));
    }
    if (item_ids.size() != counts.size()) throw Error("annotation table: one id per item required");
    AnnotationTable t;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i].size() != categories.size())
            throw Error("annotation table: item '" + item_ids[i] + "' has " + std::to_string(counts[i].size()) + " counts for " +
                        std::to_string(categories.size()) + " categories");
        std::size_t m = 0;
        for (auto c : counts[i]) m += c;
        if (i == 0) t.annotators_per_item = m;
        if (m != t.annotators_per_item)
            throw Error("annotation table: item '" + item_ids[i] + "' has " + std::to_string(m) + " annotations, expected " +
                        std::to_string(t.annotators_per_item));
    }
    t.categories = std::move(categories);
    t.counts = std::move(counts);
    t.item_ids = std::move(item_ids);
    return t;
}

std::map<std::string, AnnotationTable> pivot_annotations(const std::vector<Annotation>& rows, std::optional<std::size_t> expected_annotators) {
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    // question -> item -> label -> count
    std::map<std::string, std::map<std::string, std::map<std::string, std::size_t>>> grouped;
    std::map<std::string, std::set<std::string>> categories;
    for (const auto& r : rows) {
        if (!seen.emplace(r.item_id, r.annotator_id, r.question_id).second)
            throw Error("duplicate annotation (item '" + r.item_id + "', annotator '" + r.annotator_id + "', question '" + r.question_id + "')");
        ++grouped[r.question_id][r.item_id][r.label];
        categories[r.question_id].insert(r.label);
    }
    std::map<std::string, AnnotationTable> out;
    for (const auto& [question, items] : grouped) {
        std::vector<std::string> cats(categories[question].begin(), categories[question].end());
        std::vector<std::vector<std::size_t>> counts;
        std::vector<std::string> ids;
        for (const auto& [item, labels] : items) {
            std::vector<std::size_t> row(cats.size(), 0);
            std::size_t m = 0;
            for (std::size_t j = 0; j < cats.size(); ++j) {
                const auto it = labels.find(cats[j]);
                if (it != labels.end()) row[j] = it->second;
                m += row[j];
            }
            if (expected_annotators && m != *expected_annotators)
                throw Error("question '" + question + "' item '" + item + "' has " + std::to_string(m) + " annotations, expected " +
                            std::to_string(*expected_annotators));
            counts.push_back(std::move(row));
            ids.push_back(item);
        }
        try {
            AnnotationTable t = make_annotation_table(std::move(cats), std::move(counts), std::move(ids));
            t.question_id = question;
            out.emplace(question, std::move(t));
        } catch (const Error& e) {
            throw Error("question '" + question + "': " + e.what());
        }
    }
    return out;
}

KappaResult fleiss_kappa(const AnnotationTable& table) {
    const std::size_t n = table.counts.size();
    const std::size_t k = table.categories.size();
    const std::size_t m = table.annotators_per_item;
    if (n == 0) throw Error("fleiss kappa: no items");
    if (m < 2) throw Error("fleiss kappa: needs at least 2 annotators per item, got " + std::to_string(m));
    KappaResult r;
    r.n_items = n;
    r.n_annotators = m;
    r.n_categories = k;
    const double md = static_cast<double>(m);
    std::vector<double> column(k, 0.0);
    double p_sum = 0.0;
    for (const auto& row : table.counts) {
        std::size_t row_total = 0;
        double sq = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double c = static_cast<double>(row[j]);
            sq += c * c;
            column[j] += c;
            row_total += row[j];
        }
        if (row_total != m) throw Error("fleiss kappa: non-uniform annotator count");
        p_sum += (sq - md) / (md * (md - 1.0));
    }
    r.p_bar = p_sum / static_cast<double>(n);
    // Integer sum of squares, so relabeling categories cannot change a bit.
    std::uint64_t col_sq = 0;
    for (double c : column) col_sq += static_cast<std::uint64_t>(c) * static_cast<std::uint64_t>(c);
    const double all = static_cast<double>(n) * md;
    r.p_bar_e = static_cast<double>(col_sq) / (all * all);
    if (r.p_bar_e >= 1.0) {
        r.degenerate = true;
        r.kappa = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    r.kappa = (r.p_bar - r.p_bar_e) / (1.0 - r.p_bar_e);
    return r;
}

std::vector<std::string> human_majority(const AnnotationTable& table) {
    std::vector<std::string> out;
    out.reserve(table.counts.size());
    for (const auto& row : table.counts) {
        std::map<std::string, std::size_t> counts;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] > 0) counts[table.categories[j]] = row[j];
        }
        out.push_back(majority_from_counts(std::move(counts)).label);
    }
    return out;
}

double agreement_rate(const std::map<std::string, std::string>& auto_labels, const std::map<std::string, std::string>& human_labels) {
    if (auto_labels.empty()) throw Error("agreement rate: no items");
    for (const auto& [id, _] : auto_labels) {
        if (!human_labels.count(id)) throw Error("agreement rate: item '" + id + "' has no human label");
    }
    for (const auto& [id, _] : human_labels) {
        if (!auto_labels.count(id)) throw Error("agreement rate: item '" + id + "' has no automatic label");
    }
    std::size_t matches = 0;
    for (const auto& [id, label] : auto_labels) {
        if (human_labels.at(id) == label) ++matches;
    }
    return 100.0 * static_cast<double>(matches) / static_cast<double>(auto_labels.size());
}

std::map<std::string, std::map<std::string, std::string>> parse_auto_labels(std::string_view jsonl) {
    std::map<std::string, std::map<std::string, std::string>> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < jsonl.size()) {
        auto end = jsonl.find('\n', start);
        if (end == std::string_view::npos) end = jsonl.size();
        const std::string_view line = trim(jsonl.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto item = j.at("item_id").get<std::string>();
            const auto question = j.at("question_id").get<std::string>();
            if (!out[question].emplace(item, j.at("label").get<std::string>()).second)
                throw Error("duplicate item '" + item + "' for question '" + question + "'");
        } catch (const nlohmann::json::exception& e) {
            throw Error("auto labels line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error("auto labels line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace cultprobe
