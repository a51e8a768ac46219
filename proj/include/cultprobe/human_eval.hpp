#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cultprobe {

struct Annotation {
    std::string item_id;
    std::string annotator_id;
    std::string question_id;
    std::string label;
};

// Long-form CSV with header item_id,annotator_id,question_id,label.
std::vector<Annotation> parse_annotations_csv(std::string_view text);

// Counts per item and category for one question.
struct AnnotationTable {
    std::string question_id;
    std::vector<std::string> categories;
    std::vector<std::string> item_ids;
    std::vector<std::vector<std::size_t>> counts;  // [item][category]
    std::size_t annotators_per_item = 0;
};

// Builds a table from explicit counts; every row must sum to the same m.
AnnotationTable make_annotation_table(std::vector<std::string> categories, std::vector<std::vector<std::size_t>> counts,
                                      std::vector<std::string> item_ids = {});

// One table per question. Categories are the labels seen for the question,
// sorted. Duplicate (item, annotator, question) rows are an error, and so is a
// non-uniform annotator count unless expected_annotators is given, in which
// case every item must have exactly that many.
std::map<std::string, AnnotationTable> pivot_annotations(const std::vector<Annotation>& rows,
                                                         std::optional<std::size_t> expected_annotators = std::nullopt);

struct KappaResult {
    double kappa = 0.0;  // NaN when degenerate
    double p_bar = 0.0;
    double p_bar_e = 0.0;
    std::size_t n_items = 0;
    std::size_t n_annotators = 0;
    std::size_t n_categories = 0;
    bool degenerate = false;  // p_bar_e == 1, kappa undefined
};

KappaResult fleiss_kappa(const AnnotationTable& table);

// Per-item majority with the extrinsic tie rule; ties give CantTell.
std::vector<std::string> human_majority(const AnnotationTable& table);

// 100 * matches / total over item ids. Both sides must cover the same ids.
// CantTell on both sides counts as a match.
double agreement_rate(const std::map<std::string, std::string>& auto_labels, const std::map<std::string, std::string>& human_labels);

// Automatic labels as JSON Lines {item_id, question_id, label}; returns
// question -> (item -> label).
std::map<std::string, std::map<std::string, std::string>> parse_auto_labels(std::string_view jsonl);

}  // namespace cultprobe
