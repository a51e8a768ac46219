#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cultprobe/ontology.hpp"

namespace cultprobe {

inline constexpr std::string_view kCantTell = "CantTell";
// Answer text the sidecar writes when the VQA model failed on an item.
inline constexpr std::string_view kErrorAnswer = "__error__";

enum class QuestionType { Xna, Xdp, Coverage };

// "xna", "xdp:<dimension id>" or "coverage".
struct QuestionId {
    QuestionType type = QuestionType::Xna;
    std::string dimension_id;  // Xdp only

    std::string to_string() const;
    static QuestionId parse(std::string_view text);
    auto operator<=>(const QuestionId&) const = default;
};

struct VqaAnswer {
    std::string model;
    std::string concept_id;
    std::string pt;
    std::string lang;
    int image_index = 0;
    QuestionId question;
    std::string answer;
    std::string source;
};

struct AnswerFile {
    std::vector<VqaAnswer> answers;
    std::size_t excluded_errors = 0;  // "__error__" records dropped on load
};

// JSON Lines with keys model, concept, pt, lang, image_index, question_id,
// answer, source. Ids are checked against the registry when one is given.
AnswerFile parse_answers(std::string_view jsonl, const Registry* registry = nullptr);
AnswerFile read_answers(const std::filesystem::path& path, const Registry* registry = nullptr);
std::string answers_to_jsonl(std::span<const VqaAnswer> answers);

// Lowercases ASCII, deletes '.' and '\'', turns other ASCII punctuation into
// spaces and splits on whitespace.
std::vector<std::string> answer_tokens(std::string_view raw);

// Maps answer phrases to canonical labels. Matching is whole-token: an alias
// matches a contiguous run of answer tokens. The longest alias wins (tokens,
// then characters), then the earliest position.
class AliasTable {
public:
    // Every nationality name (primary and additional) with its aliases.
    static AliasTable nationalities(const Registry& registry);
    // The two pole names of a dimension with their adjectives and aliases.
    static AliasTable poles(const CulturalDimension& dimension);

    // Throws if the alias already maps to a different label.
    void add(std::string_view alias, std::string_view label);

    // Canonical label, or kCantTell when nothing matches.
    std::string match(std::string_view raw) const;
    std::size_t size() const { return entries_.size(); }

private:
    struct Entry {
        std::vector<std::string> tokens;
        std::size_t chars = 0;
        std::string label;
    };
    std::vector<Entry> entries_;
};

std::string normalize_answer(std::string_view raw, const AliasTable& aliases);

struct VoteOutcome {
    std::string label;  // winning label or kCantTell
    std::map<std::string, std::size_t> counts;

    std::size_t total() const;
};

// Strictly greatest count wins; any tie for the top count gives CantTell. A
// CantTell plurality also gives CantTell.
VoteOutcome majority_from_counts(std::map<std::string, std::size_t> counts);
VoteOutcome majority_vote(std::span<const std::string> raw_answers, const AliasTable& aliases);

struct XnaItem {
    std::string language;  // ground truth
    VoteOutcome vote;
};

struct XnaResult {
    double score = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;
    NationalityOrder order = NationalityOrder::Primary;
};

// Correct iff the vote label is in nationality_for(language, order).
XnaResult xna_score(std::span<const XnaItem> items, const Registry& registry, NationalityOrder order);

struct XdpScore {
    std::string dimension_id;
    double value = 0.0;  // frac_d0 - frac_d1
    double frac_d0 = 0.0;
    double frac_d1 = 0.0;
    double frac_cant = 0.0;
    std::size_t answers = 0;
};

XdpScore xdp_from_counts(const CulturalDimension& dimension, std::size_t n_d0, std::size_t n_d1, std::size_t n_cant);
// labels: pole names of the dimension or kCantTell; anything else is an error.
XdpScore xdp_score(std::span<const std::string> labels, const CulturalDimension& dimension);
XdpScore xdp_score_raw(std::span<const std::string> raw_answers, const CulturalDimension& dimension);

// ---------------------------------------------------------------------------
// Grouping. Sources are never mixed.
// ---------------------------------------------------------------------------

struct AnswerGroupKey {
    std::string source;
    std::string model;
    std::string concept_id;
    std::string pt;
    std::string lang;

    auto operator<=>(const AnswerGroupKey&) const = default;
};

// Raw answers of one question per image set, ordered by image index.
std::map<AnswerGroupKey, std::vector<std::string>> group_answers(std::span<const VqaAnswer> answers, const QuestionId& question);

struct XnaRow {
    std::string source;
    std::string model;
    std::string lang;
    std::string pt;  // "*" when pooled over templates
    XnaResult result;
};

struct XnaReport {
    NationalityOrder order = NationalityOrder::Primary;
    std::vector<XnaRow> rows;  // per (source, model, lang, pt) and pooled per (source, model, lang)
    // Per (source, lang): mean over models of the pooled per-model score.
    std::map<std::pair<std::string, std::string>, double> model_means;
    std::map<AnswerGroupKey, VoteOutcome> votes;
};

// pts restricts the templates considered; empty means all.
XnaReport xna_report(std::span<const VqaAnswer> answers, const Registry& registry, NationalityOrder order,
                     const std::vector<std::string>& pts = {});

struct XdpRow {
    std::string source;
    std::string model;
    std::string lang;
    std::string pt;  // "*" for the mean over templates
    XdpScore score;
};

// Fractions over all answers of a (source, model, lang, pt) cell; the "*"
// row averages the per-template values.
std::vector<XdpRow> xdp_report(std::span<const VqaAnswer> answers, const CulturalDimension& dimension);

}  // namespace cultprobe
