#include "cultprobe/extrinsic.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <tuple>

#include <json.hpp>

#include "cultprobe/error.hpp"
#include "cultprobe/prompt_engine.hpp"
#include "cultprobe/util.hpp"

namespace cultprobe {

using json = nlohmann::json;

std::string QuestionId::to_string() const {
    switch (type) {
        case QuestionType::Xna: return "xna";
        case QuestionType::Xdp: return "xdp:" + dimension_id;
        case QuestionType::Coverage: return "coverage";
    }
    return "unknown";
}

QuestionId QuestionId::parse(std::string_view text) {
    if (text == "xna") return {QuestionType::Xna, {}};
    if (text == "coverage") return {QuestionType::Coverage, {}};
    if (text.starts_with("xdp:") && text.size() > 4) return {QuestionType::Xdp, std::string(text.substr(4))};
    throw Error("unknown question id '" + std::string(text) + "'");
}

AnswerFile parse_answers(std::string_view jsonl, const Registry* registry) {
    AnswerFile out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= jsonl.size()) {
        auto end = jsonl.find('\n', start);
        if (end == std::string_view::npos) end = jsonl.size();
        const std::string_view line = trim(jsonl.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "answers line " + std::to_string(line_no);
        try {
            const json j = json::parse(line);
            VqaAnswer a;
            a.model = j.at("model").get<std::string>();
            a.concept_id = j.at("concept").get<std::string>();
            a.pt = j.at("pt").get<std::string>();
            a.lang = j.at("lang").get<std::string>();
            a.image_index = j.at("image_index").get<int>();
            a.question = QuestionId::parse(j.at("question_id").get<std::string>());
            a.answer = j.at("answer").get<std::string>();
            a.source = j.at("source").get<std::string>();
            if (a.image_index < 0) throw Error("negative image_index");
            if (a.answer == kErrorAnswer) {
                ++out.excluded_errors;
                continue;
            }
            if (trim(a.answer).empty()) throw Error("empty answer");
            if (registry != nullptr) {
                registry->concept_by_id(a.concept_id);
                registry->language(a.lang);
                parse_template_kind(a.pt);
                if (a.question.type == QuestionType::Xdp) registry->dimension(a.question.dimension_id);
            }
            out.answers.push_back(std::move(a));
        } catch (const json::exception& e) {
            throw Error(where + ": " + e.what());
        } catch (const Error& e) {
            throw Error(where + ": " + e.what());
        }
        if (end == jsonl.size()) break;
    }
    return out;
}

AnswerFile read_answers(const std::filesystem::path& path, const Registry* registry) {
    try {
        return parse_answers(read_file(path), registry);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

std::string answers_to_jsonl(std::span<const VqaAnswer> answers) {
    std::string out;
    for (const auto& a : answers) {
        nlohmann::ordered_json j;
        j["model"] = a.model;
        j["concept"] = a.concept_id;
        j["pt"] = a.pt;
        j["lang"] = a.lang;
        j["image_index"] = a.image_index;
        j["question_id"] = a.question.to_string();
        j["answer"] = a.answer;
        j["source"] = a.source;
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

std::vector<std::string> answer_tokens(std::string_view raw) {
    std::string cleaned;
    cleaned.reserve(raw.size());
    for (char c : raw) {
        const auto u = static_cast<unsigned char>(c);
        if (c == '.' || c == '\'') continue;
        if (u < 0x80 && std::ispunct(u)) {
            cleaned.push_back(' ');
        } else if (c >= 'A' && c <= 'Z') {
            cleaned.push_back(static_cast<char>(c - 'A' + 'a'));
        } else {
            cleaned.push_back(c);
        }
    }
    return split_whitespace(cleaned);
}

AliasTable AliasTable::nationalities(const Registry& registry) {
    AliasTable t;
    for (const auto& n : registry.nationalities()) {
        t.add(n.primary_name, n.primary_name);
        for (const auto& a : n.country_aliases) t.add(a, n.primary_name);
        for (const auto& name : n.additional_names) {
            t.add(name, name);
            const auto it = n.additional_aliases.find(name);
            if (it == n.additional_aliases.end()) continue;
            for (const auto& a : it->second) t.add(a, name);
        }
    }
    return t;
}

AliasTable AliasTable::poles(const CulturalDimension& dimension) {
    AliasTable t;
    for (const DimensionPole* p : {&dimension.pole_positive, &dimension.pole_negative}) {
        t.add(p->name, p->name);
        t.add(p->adjective, p->name);
        for (const auto& a : p->aliases) t.add(a, p->name);
    }
    return t;
}

void AliasTable::add(std::string_view alias, std::string_view label) {
    Entry e{answer_tokens(alias), 0, std::string(label)};
    if (e.tokens.empty()) throw Error("alias '" + std::string(alias) + "' is empty after normalization");
    for (const auto& tok : e.tokens) e.chars += tok.size();
    for (const auto& existing : entries_) {
        if (existing.tokens != e.tokens) continue;
        if (existing.label != e.label)
            throw Error("alias '" + std::string(alias) + "' maps to both '" + existing.label + "' and '" + e.label + "'");
        return;
    }
    entries_.push_back(std::move(e));
}

std::string AliasTable::match(std::string_view raw) const {
    const auto tokens = answer_tokens(raw);
    const Entry* best = nullptr;
    std::size_t best_pos = 0;
    for (const auto& e : entries_) {
        if (e.tokens.size() > tokens.size()) continue;
        std::size_t pos = 0;
        bool found = false;
        for (; pos + e.tokens.size() <= tokens.size(); ++pos) {
            if (std::equal(e.tokens.begin(), e.tokens.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos))) {
                found = true;
                break;
            }
        }
        if (!found) continue;
        const bool better = best == nullptr || e.tokens.size() > best->tokens.size() ||
                            (e.tokens.size() == best->tokens.size() && (e.chars > best->chars || (e.chars == best->chars && pos < best_pos)));
        if (better) {
            best = &e;
            best_pos = pos;
        }
    }
    return best == nullptr ? std::string(kCantTell) : best->label;
}

std::string normalize_answer(std::string_view raw, const AliasTable& aliases) { return aliases.match(raw); }

std::size_t VoteOutcome::total() const {
    std::size_t n = 0;
    for (const auto& [_, c] : counts) n += c;
    return n;
}

VoteOutcome majority_from_counts(std::map<std::string, std::size_t> counts) {
    VoteOutcome v;
    std::size_t top = 0;
    std::size_t at_top = 0;
    for (const auto& [label, c] : counts) {
        if (c > top) {
            top = c;
            at_top = 1;
            v.label = label;
        } else if (c == top && c > 0) {
            ++at_top;
        }
    }
    if (top == 0) throw Error("majority vote over zero answers");
    if (at_top > 1) v.label = std::string(kCantTell);
    v.counts = std::move(counts);
    return v;
}

VoteOutcome majority_vote(std::span<const std::string> raw_answers, const AliasTable& aliases) {
    std::map<std::string, std::size_t> counts;
    for (const auto& a : raw_answers) ++counts[aliases.match(a)];
    return majority_from_counts(std::move(counts));
}

XnaResult xna_score(std::span<const XnaItem> items, const Registry& registry, NationalityOrder order) {
    if (items.empty()) throw Error("xna score over zero image sets");
    XnaResult r;
    r.order = order;
    for (const auto& item : items) {
        const auto accepted = registry.nationality_for(item.language, order);
        if (std::find(accepted.begin(), accepted.end(), item.vote.label) != accepted.end()) ++r.correct;
        ++r.total;
    }
    r.score = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

XdpScore xdp_from_counts(const CulturalDimension& dimension, std::size_t n_d0, std::size_t n_d1, std::size_t n_cant) {
    const std::size_t n = n_d0 + n_d1 + n_cant;
    if (n == 0) throw Error("xdp score over zero answers for '" + dimension.id + "'");
    const double total = static_cast<double>(n);
    XdpScore s;
    s.dimension_id = dimension.id;
    s.answers = n;
    s.frac_d0 = static_cast<double>(n_d0) / total;
    s.frac_d1 = static_cast<double>(n_d1) / total;
    s.frac_cant = static_cast<double>(n_cant) / total;
    // One rounding instead of two keeps e.g. 6/3/1 of 10 at exactly 0.3.
    s.value = (static_cast<double>(n_d0) - static_cast<double>(n_d1)) / total;
    return s;
}

XdpScore xdp_score(std::span<const std::string> labels, const CulturalDimension& dimension) {
    std::size_t n0 = 0, n1 = 0, nc = 0;
    for (const auto& l : labels) {
        if (l == dimension.pole_positive.name) {
            ++n0;
        } else if (l == dimension.pole_negative.name) {
            ++n1;
        } else if (l == kCantTell) {
            ++nc;
        } else {
            throw Error("label '" + l + "' is not a pole of '" + dimension.id + "'");
        }
    }
    return xdp_from_counts(dimension, n0, n1, nc);
}

XdpScore xdp_score_raw(std::span<const std::string> raw_answers, const CulturalDimension& dimension) {
    const AliasTable aliases = AliasTable::poles(dimension);
    std::vector<std::string> labels;
    labels.reserve(raw_answers.size());
    for (const auto& a : raw_answers) labels.push_back(aliases.match(a));
    return xdp_score(labels, dimension);
}

std::map<AnswerGroupKey, std::vector<std::string>> group_answers(std::span<const VqaAnswer> answers, const QuestionId& question) {
    std::map<AnswerGroupKey, std::vector<std::pair<int, const std::string*>>> staged;
    for (const auto& a : answers) {
        if (a.question != question) continue;
        staged[AnswerGroupKey{a.source, a.model, a.concept_id, a.pt, a.lang}].emplace_back(a.image_index, &a.answer);
    }
    std::map<AnswerGroupKey, std::vector<std::string>> out;
    for (auto& [key, list] : staged) {
        std::stable_sort(list.begin(), list.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        for (std::size_t i = 1; i < list.size(); ++i) {
            if (list[i].first == list[i - 1].first)
                throw Error("duplicate answer for image " + std::to_string(list[i].first) + " of (" + key.source + ", " + key.model + ", " +
                            key.concept_id + ", " + key.pt + ", " + key.lang + ") question " + question.to_string());
        }
        auto& dst = out[key];
        for (const auto& [_, text] : list) dst.push_back(*text);
    }
    return out;
}

XnaReport xna_report(std::span<const VqaAnswer> answers, const Registry& registry, NationalityOrder order, const std::vector<std::string>& pts) {
    const AliasTable aliases = AliasTable::nationalities(registry);
    XnaReport report;
    report.order = order;
    using CellKey = std::tuple<std::string, std::string, std::string, std::string>;  // source, model, lang, pt
    std::map<CellKey, std::vector<XnaItem>> cells;
    for (auto& [key, raw] : group_answers(answers, QuestionId{QuestionType::Xna, {}})) {
        if (!pts.empty() && std::find(pts.begin(), pts.end(), key.pt) == pts.end()) continue;
        VoteOutcome vote = majority_vote(raw, aliases);
        XnaItem item{key.lang, vote};
        cells[{key.source, key.model, key.lang, key.pt}].push_back(item);
        cells[{key.source, key.model, key.lang, "*"}].push_back(std::move(item));
        report.votes.emplace(key, std::move(vote));
    }
    std::map<std::pair<std::string, std::string>, std::vector<double>> per_model;
    for (const auto& [key, items] : cells) {
        const auto& [source, model, lang, pt] = key;
        XnaRow row{source, model, lang, pt, xna_score(items, registry, order)};
        if (pt == "*") per_model[{source, lang}].push_back(row.result.score);
        report.rows.push_back(std::move(row));
    }
    for (const auto& [key, scores] : per_model) {
        double sum = 0.0;
        for (double s : scores) sum += s;
        report.model_means[key] = sum / static_cast<double>(scores.size());
    }
    return report;
}

std::vector<XdpRow> xdp_report(std::span<const VqaAnswer> answers, const CulturalDimension& dimension) {
    const AliasTable aliases = AliasTable::poles(dimension);
    using CellKey = std::tuple<std::string, std::string, std::string, std::string>;  // source, model, lang, pt
    std::map<CellKey, std::vector<std::string>> cells;
    for (const auto& [key, raw] : group_answers(answers, QuestionId{QuestionType::Xdp, dimension.id})) {
        auto& dst = cells[{key.source, key.model, key.lang, key.pt}];
        for (const auto& a : raw) dst.push_back(aliases.match(a));
    }
    std::vector<XdpRow> rows;
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<XdpScore>> by_lang;
    for (const auto& [key, labels] : cells) {
        const auto& [source, model, lang, pt] = key;
        XdpRow row{source, model, lang, pt, xdp_score(labels, dimension)};
        by_lang[{source, model, lang}].push_back(row.score);
        rows.push_back(std::move(row));
    }
    for (const auto& [key, scores] : by_lang) {
        XdpScore mean;
        mean.dimension_id = dimension.id;
        const double n = static_cast<double>(scores.size());
        for (const auto& s : scores) {
            mean.value += s.value / n;
            mean.frac_d0 += s.frac_d0 / n;
            mean.frac_d1 += s.frac_d1 / n;
            mean.frac_cant += s.frac_cant / n;
            mean.answers += s.answers;
        }
        const auto& [source, model, lang] = key;
        rows.push_back(XdpRow{source, model, lang, "*", mean});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const XdpRow& a, const XdpRow& b) {
        return std::tie(a.source, a.model, a.lang, a.pt) < std::tie(b.source, b.model, b.lang, b.pt);
    });
    return rows;
}

}  // namespace cultprobe
