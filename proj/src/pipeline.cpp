#include "cultprobe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <tuple>

#include "cultprobe/error.hpp"
#include "cultprobe/intrinsic_metrics.hpp"
#include "cultprobe/kernels.hpp"
#include "cultprobe/report.hpp"
#include "cultprobe/util.hpp"

namespace cultprobe {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kPooled = "*";

std::string pt_file_tag(std::string_view pt) { return pt == kPooled ? "all" : file_safe(pt); }

std::size_t language_rank(const Registry& registry, std::string_view code) {
    const auto& langs = registry.languages();
    for (std::size_t i = 0; i < langs.size(); ++i) {
        if (langs[i].code == code) return i;
    }
    throw Error("unknown language code '" + std::string(code) + "'");
}

void sort_languages(const Registry& registry, std::vector<std::string>& codes) {
    std::sort(codes.begin(), codes.end(), [&](const std::string& a, const std::string& b) { return language_rank(registry, a) < language_rank(registry, b); });
}

struct ImageSets {
    std::vector<SetGroup> groups;
    std::vector<kernels::RowSet> rows;
};

ImageSets image_sets(const EmbeddingStore& store, const Registry& registry) {
    ImageSets out;
    for (auto& [group, rows] : store.sets(EmbeddingRole::Image)) {
        registry.language(group.lang);
        out.groups.push_back(group);
        out.rows.push_back(rows);
    }
    if (out.groups.empty()) throw Error("the archive holds no image rows");
    return out;
}

// Running mean keyed by a tuple, kept in key order.
template <typename Key>
struct Means {
    std::map<Key, std::pair<double, std::size_t>> acc;
    void add(const Key& k, double v) {
        auto& [sum, n] = acc[k];
        sum += v;
        ++n;
    }
    double get(const Key& k) const {
        const auto& [sum, n] = acc.at(k);
        return sum / static_cast<double>(n);
    }
};

ojson json_matrix(const Matrix& m) {
    ojson rows = ojson::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

MetricOutput run_prompts(const Registry& registry, const ModelConfig& config) {
    const DatasetManifest manifest = enumerate_dataset(config, registry);
    MetricOutput out;
    out.metric = "prompts";
    out.files.push_back({"prompts/manifest_" + file_safe(config.model_id) + ".jsonl", manifest_to_jsonl(manifest)});
    out.summary["model"] = config.model_id;
    out.summary["entries"] = manifest.entries.size();
    out.summary["languages"] = config.languages.size();
    out.summary["template_kinds"] = config.template_kinds.size();
    out.summary["concepts"] = config.concept_ids.size();
    out.summary["k"] = config.images_per_set;
    out.summary["base_seed"] = config.base_seed;
    return out;
}

// ---------------------------------------------------------------------------
// NA
// ---------------------------------------------------------------------------

MetricOutput run_na(const Registry& registry, const EmbeddingStore& store, const MetricOptions& options) {
    const ImageSets all = image_sets(store, registry);
    std::map<std::string, std::vector<std::size_t>> by_model;
    for (std::size_t s = 0; s < all.groups.size(); ++s) by_model[all.groups[s].model].push_back(s);

    MetricOutput out;
    out.metric = "na";
    out.summary["order"] = std::string(to_string(options.order));
    out.summary["models"] = ojson::object();
    CsvWriter dist_csv({"model", "concept", "pt", "lang", "nationality", "prob"});
    CsvWriter acc_csv({"model", "pt", "order", "languages", "accuracy", "tied_rows"});

    for (const auto& [model, set_ids] : by_model) {
        std::vector<std::string> labels;
        for (auto s : set_ids) {
            if (std::find(labels.begin(), labels.end(), all.groups[s].lang) == labels.end()) labels.push_back(all.groups[s].lang);
        }
        sort_languages(registry, labels);
        // Nationalities of the label languages; a shared name (e.g. Swiss)
        // counts toward every language listing it.
        std::vector<std::string> names;
        std::vector<std::vector<std::size_t>> owners;
        for (std::size_t li = 0; li < labels.size(); ++li) {
            for (const auto& n : registry.nationality_for(labels[li], options.order)) {
                auto it = std::find(names.begin(), names.end(), n);
                if (it == names.end()) {
                    names.push_back(n);
                    owners.emplace_back();
                    it = names.end() - 1;
                }
                owners[static_cast<std::size_t>(it - names.begin())].push_back(li);
            }
        }
        std::vector<std::size_t> class_rows;
        for (const auto& n : names) class_rows.push_back(store.text_row(national_style_prompt(n)));

        std::vector<kernels::RowSet> sets;
        for (auto s : set_ids) sets.push_back(all.rows[s]);
        const Matrix dist = kernels::na_distributions(store, sets, class_rows);

        // pt -> lang -> summed label distribution
        std::map<std::string, std::map<std::string, std::pair<std::vector<double>, std::size_t>>> acc;
        for (std::size_t i = 0; i < set_ids.size(); ++i) {
            const SetGroup& g = all.groups[set_ids[i]];
            const auto p = dist.row(i);
            for (std::size_t c = 0; c < names.size(); ++c) {
                dist_csv.field(g.model).field(g.concept_id).field(g.pt).field(g.lang).field(names[c]).field(p[c]);
                dist_csv.end_row();
            }
            std::vector<double> mapped(labels.size(), 0.0);
            for (std::size_t c = 0; c < names.size(); ++c) {
                for (auto li : owners[c]) mapped[li] += p[c];
            }
            double sum = 0.0;
            for (double v : mapped) sum += v;
            for (double& v : mapped) v /= sum;
            for (const std::string& pt : {g.pt, std::string(kPooled)}) {
                auto& [vec, n] = acc[pt][g.lang];
                if (vec.empty()) vec.assign(labels.size(), 0.0);
                for (std::size_t li = 0; li < labels.size(); ++li) vec[li] += mapped[li];
                ++n;
            }
        }

        ojson model_json;
        model_json["nationalities"] = names;
        model_json["templates"] = ojson::object();
        for (const auto& [pt, rows_by_lang] : acc) {
            // Labels of this template: the languages it has sets for.
            std::vector<std::string> pt_labels;
            std::vector<std::size_t> cols;
            for (std::size_t li = 0; li < labels.size(); ++li) {
                if (rows_by_lang.count(labels[li])) {
                    pt_labels.push_back(labels[li]);
                    cols.push_back(li);
                }
            }
            Matrix m(pt_labels.size(), pt_labels.size());
            for (std::size_t r = 0; r < pt_labels.size(); ++r) {
                const auto& [vec, n] = rows_by_lang.at(pt_labels[r]);
                double sum = 0.0;
                for (std::size_t c = 0; c < cols.size(); ++c) sum += vec[cols[c]] / static_cast<double>(n);
                for (std::size_t c = 0; c < cols.size(); ++c) m(r, c) = vec[cols[c]] / static_cast<double>(n) / sum;
            }
            const AccuracyResult acc_result = confusion_accuracy(m);
            out.files.push_back({"na/confusion_" + file_safe(model) + "_" + pt_file_tag(pt) + ".csv", matrix_csv(pt_labels, pt_labels, m)});
            acc_csv.field(model).field(pt).field(to_string(options.order)).field(pt_labels.size()).field(acc_result.accuracy).field(acc_result.tied_rows);
            acc_csv.end_row();
            ojson t;
            t["labels"] = pt_labels;
            t["matrix"] = json_matrix(m);
            t["accuracy"] = acc_result.accuracy;
            t["tied_rows"] = acc_result.tied_rows;
            model_json["templates"][pt] = std::move(t);
        }
        out.summary["models"][model] = std::move(model_json);
    }
    out.files.push_back({"na/distributions.csv", dist_csv.str()});
    out.files.push_back({"na/accuracy.csv", acc_csv.str()});
    return out;
}

// ---------------------------------------------------------------------------
// DP and the culture map
// ---------------------------------------------------------------------------

MetricOutput run_dp(const Registry& registry, const EmbeddingStore& store, const MetricOptions&) {
    const ImageSets all = image_sets(store, registry);
    MetricOutput out;
    out.metric = "dp";
    using Key = std::tuple<std::string, std::string, std::string, std::string>;  // model, lang, pt, dimension
    Means<Key> pos, neg;
    for (const auto& dim : registry.dimensions()) {
        const auto rp = store.text_row(dimension_aspect_prompt(dim.pole_positive));
        const auto rn = store.text_row(dimension_aspect_prompt(dim.pole_negative));
        const auto sp = kernels::mean_cosine_to_target(store, all.rows, std::vector<std::size_t>(all.rows.size(), rp));
        const auto sn = kernels::mean_cosine_to_target(store, all.rows, std::vector<std::size_t>(all.rows.size(), rn));
        for (std::size_t s = 0; s < all.groups.size(); ++s) {
            const auto& g = all.groups[s];
            for (const std::string& pt : {g.pt, std::string(kPooled)}) {
                pos.add({g.model, g.lang, pt, dim.id}, sp[s]);
                neg.add({g.model, g.lang, pt, dim.id}, sn[s]);
            }
        }
    }
    CsvWriter csv({"model", "lang", "pt", "dimension", "pole_positive", "pole_negative", "score_positive", "score_negative"});
    std::map<std::string, std::map<std::string, std::map<std::string, DimensionScorePair>>> pooled;  // model -> lang -> dim
    ojson rows = ojson::array();
    for (const auto& [key, _] : pos.acc) {
        const auto& [model, lang, pt, dim_id] = key;
        const auto& dim = registry.dimension(dim_id);
        const double p = pos.get(key), n = neg.get(key);
        csv.field(model).field(lang).field(pt).field(dim_id).field(dim.pole_positive.name).field(dim.pole_negative.name).field(p).field(n);
        csv.end_row();
        rows.push_back({{"model", model}, {"lang", lang}, {"pt", pt}, {"dimension", dim_id}, {"score_positive", p}, {"score_negative", n}});
        if (pt == kPooled) pooled[model][lang][dim_id] = DimensionScorePair{dim_id, p, n};
    }
    out.files.push_back({"dp/scores.csv", csv.str()});
    out.summary["scores"] = std::move(rows);
    const AxisSpec x = default_x_axis(), y = default_y_axis();
    if (registry.find_language("EN") != nullptr) {
        out.summary["culture_map"] = ojson::object();
        for (const auto& [model, scores] : pooled) {
            const CultureMap map = culture_map_axes(scores, x, y, default_language_groups());
            out.files.push_back({"dp/culture_map_" + file_safe(model) + ".csv", culture_map_csv(map)});
            ojson pts = ojson::array();
            for (const auto& p : map.points) pts.push_back({{"language", p.language}, {"x", p.x}, {"y", p.y}, {"group", p.group}});
            out.summary["culture_map"][model] = std::move(pts);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CD
// ---------------------------------------------------------------------------

MetricOutput run_cd(const Registry& registry, const EmbeddingStore& store, const MetricOptions&) {
    const ImageSets all = image_sets(store, registry);
    std::vector<std::size_t> targets;
    for (const auto& g : all.groups) targets.push_back(store.text_row(concept_reference_prompt(registry.concept_by_id(g.concept_id))));
    const auto means = kernels::mean_cosine_to_target(store, all.rows, targets);
    MetricOutput out;
    out.metric = "cd";
    out.summary["scale"] = kCulturalDistanceScale;
    CsvWriter per_set({"model", "concept", "pt", "lang", "cd"});
    using Key = std::tuple<std::string, std::string, std::string>;  // model, lang, pt
    Means<Key> agg;
    for (std::size_t s = 0; s < all.groups.size(); ++s) {
        const auto& g = all.groups[s];
        const double cd = cultural_distance_from_mean_cosine(means[s]);
        per_set.field(g.model).field(g.concept_id).field(g.pt).field(g.lang).field(cd);
        per_set.end_row();
        agg.add({g.model, g.lang, g.pt}, cd);
        agg.add({g.model, g.lang, std::string(kPooled)}, cd);
    }
    CsvWriter csv({"model", "lang", "pt", "cd", "sets"});
    ojson rows = ojson::array();
    for (const auto& [key, v] : agg.acc) {
        const auto& [model, lang, pt] = key;
        csv.field(model).field(lang).field(pt).field(agg.get(key)).field(v.second);
        csv.end_row();
        rows.push_back({{"model", model}, {"lang", lang}, {"pt", pt}, {"cd", agg.get(key)}, {"sets", v.second}});
    }
    out.summary["scores"] = std::move(rows);
    out.files.push_back({"cd/scores.csv", csv.str()});
    out.files.push_back({"cd/per_set.csv", per_set.str()});
    return out;
}

// ---------------------------------------------------------------------------
// CCS
// ---------------------------------------------------------------------------

MetricOutput run_ccs(const Registry& registry, const EmbeddingStore& store, const MetricOptions& options) {
    const ImageSets all = image_sets(store, registry);
    // lang -> concept -> baseline rows (model and template of baseline keys are ignored)
    std::map<std::string, kernels::ConceptSets> baselines;
    for (const auto& [g, rows] : store.sets(EmbeddingRole::VisualBaseline)) {
        auto& dst = baselines[g.lang][g.concept_id];
        dst.insert(dst.end(), rows.begin(), rows.end());
    }
    if (baselines.empty()) throw Error("ccs: the archive has no visual baseline rows");
    // (model, pt) -> lang -> concept -> image rows
    std::map<std::pair<std::string, std::string>, std::map<std::string, kernels::ConceptSets>> images;
    for (std::size_t s = 0; s < all.groups.size(); ++s) {
        const auto& g = all.groups[s];
        images[{g.model, g.pt}][g.lang][g.concept_id] = all.rows[s];
    }
    MetricOutput out;
    out.metric = "ccs";
    out.summary["matrices"] = ojson::array();
    CsvWriter skips({"model", "pt", "l1", "l2", "concept"});
    for (const auto& [mp, by_lang] : images) {
        const auto& [model, pt] = mp;
        std::vector<std::string> labels;
        for (const auto& [lang, _] : by_lang) {
            if (baselines.count(lang)) labels.push_back(lang);
        }
        sort_languages(registry, labels);
        if (labels.size() < 2) continue;
        std::vector<kernels::ConceptSets> img, base;
        for (const auto& l : labels) {
            img.push_back(by_lang.at(l));
            base.push_back(baselines.at(l));
        }
        const CcsMatrix m = build_ccs_matrix(labels, img, base, store);
        const std::string tag = file_safe(model) + "_" + pt_file_tag(pt);
        out.files.push_back({"ccs/raw_" + tag + ".csv", matrix_csv(labels, labels, m.raw)});
        out.files.push_back({"ccs/symmetrized_" + tag + ".csv", matrix_csv(labels, labels, m.symmetrized)});
        if (options.normalize) out.files.push_back({"ccs/normalized_" + tag + ".csv", matrix_csv(labels, labels, m.normalized)});
        for (const auto& s : m.skips) {
            skips.field(model).field(pt).field(s.l1).field(s.l2).field(s.concept_id);
            skips.end_row();
        }
        ojson j;
        j["model"] = model;
        j["pt"] = pt;
        j["labels"] = labels;
        j["raw"] = json_matrix(m.raw);
        j["symmetrized"] = json_matrix(m.symmetrized);
        if (options.normalize) {
            j["normalized"] = json_matrix(m.normalized);
            j["normalization"] = {{"min", m.normalization.min}, {"max", m.normalization.max}, {"degenerate", m.normalization.degenerate}};
        }
        j["skipped"] = m.skips.size();
        out.summary["matrices"].push_back(std::move(j));
    }
    if (out.summary["matrices"].empty()) throw Error("ccs: no model and template has two languages with both images and visual baselines");
    out.files.push_back({"ccs/skips.csv", skips.str()});
    return out;
}

// ---------------------------------------------------------------------------
// Conceptual coverage
// ---------------------------------------------------------------------------

MetricOutput run_coverage(const Registry& registry, const EmbeddingStore& store, const MetricOptions& options) {
    std::map<SetGroup, kernels::RowSet> descriptions;
    for (auto& [g, rows] : store.sets(EmbeddingRole::TextBaseline)) {
        if (g.concept_id.empty()) continue;
        registry.language(g.lang);
        descriptions.emplace(g, rows);
    }
    if (descriptions.empty()) throw Error("coverage: the archive has no description rows");
    std::vector<SetGroup> groups;
    std::vector<kernels::RowSet> sets;
    std::vector<std::size_t> targets;
    for (auto& [g, rows] : descriptions) {
        groups.push_back(g);
        sets.push_back(rows);
        targets.push_back(store.text_row(registry.concept_by_id(g.concept_id).english_term));
    }
    const auto raw = kernels::mean_cosine_to_target(store, sets, targets);
    using Key = std::tuple<std::string, std::string, std::string>;  // model, lang, pt
    Means<Key> agg;
    for (std::size_t s = 0; s < groups.size(); ++s) agg.add({groups[s].model, groups[s].lang, groups[s].pt}, raw[s]);

    MetricOutput out;
    out.metric = "coverage";
    CsvWriter csv({"model", "lang", "pt", "raw", "normalized", "degenerate"});
    ojson rows = ojson::array();
    // Normalize across templates within each (model, lang).
    std::map<std::pair<std::string, std::string>, std::vector<Key>> per_ml;
    for (const auto& [key, _] : agg.acc) per_ml[{std::get<0>(key), std::get<1>(key)}].push_back(key);
    for (const auto& [ml, keys] : per_ml) {
        std::vector<double> vals;
        for (const auto& k : keys) vals.push_back(agg.get(k));
        const NormalizedValues norm = options.normalize ? normalize_matrix(vals) : NormalizedValues{vals, 0.0, 0.0, false};
        for (std::size_t i = 0; i < keys.size(); ++i) {
            const auto& [model, lang, pt] = keys[i];
            csv.field(model).field(lang).field(pt).field(vals[i]).field(norm.values[i]).field(norm.degenerate ? "true" : "false");
            csv.end_row();
            ojson r{{"model", model}, {"lang", lang}, {"pt", pt}, {"raw", vals[i]}};
            if (options.normalize) r["normalized"] = norm.values[i], r["min"] = norm.min, r["max"] = norm.max, r["degenerate"] = norm.degenerate;
            rows.push_back(std::move(r));
        }
    }
    out.summary["scores"] = std::move(rows);
    out.files.push_back({"coverage/scores.csv", csv.str()});
    return out;
}

// ---------------------------------------------------------------------------
// XNA / XDP
// ---------------------------------------------------------------------------

MetricOutput run_xna(const Registry& registry, const std::vector<VqaAnswer>& answers, const MetricOptions& options) {
    const XnaReport report = xna_report(answers, registry, options.order, options.xna_pts);
    if (report.rows.empty()) throw Error("xna: no xna answers");
    MetricOutput out;
    out.metric = "xna";
    out.summary["order"] = std::string(to_string(options.order));
    if (!options.xna_pts.empty()) out.summary["templates"] = options.xna_pts;

    CsvWriter scores({"source", "model", "lang", "pt", "order", "correct", "total", "score"});
    ojson rows = ojson::array();
    for (const auto& r : report.rows) {
        scores.field(r.source).field(r.model).field(r.lang).field(r.pt).field(to_string(options.order)).field(r.result.correct).field(r.result.total).field(r.result.score);
        scores.end_row();
        rows.push_back({{"source", r.source}, {"model", r.model}, {"lang", r.lang}, {"pt", r.pt}, {"correct", r.result.correct}, {"total", r.result.total}, {"score", r.result.score}});
    }
    out.summary["scores"] = std::move(rows);

    CsvWriter means({"source", "lang", "score"});
    ojson mean_rows = ojson::array();
    for (const auto& [key, v] : report.model_means) {
        means.field(key.first).field(key.second).field(v);
        means.end_row();
        mean_rows.push_back({{"source", key.first}, {"lang", key.second}, {"score", v}});
    }
    out.summary["model_means"] = std::move(mean_rows);

    CsvWriter votes({"source", "model", "concept", "pt", "lang", "label", "answers"});
    // (source, model) -> concept -> (correct, total)
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::pair<std::size_t, std::size_t>>> per_concept;
    for (const auto& [key, vote] : report.votes) {
        votes.field(key.source).field(key.model).field(key.concept_id).field(key.pt).field(key.lang).field(vote.label).field(vote.total());
        votes.end_row();
        const auto accepted = registry.nationality_for(key.lang, options.order);
        auto& [correct, total] = per_concept[{key.source, key.model}][key.concept_id];
        if (std::find(accepted.begin(), accepted.end(), vote.label) != accepted.end()) ++correct;
        ++total;
    }
    for (const auto& [sm, concepts] : per_concept) {
        std::vector<double> values;
        for (const auto& [_, ct] : concepts) values.push_back(static_cast<double>(ct.first) / static_cast<double>(ct.second));
        out.files.push_back({"xna/histogram_" + file_safe(sm.first) + "_" + file_safe(sm.second) + ".csv", histogram_csv(histogram(values))});
    }
    out.files.push_back({"xna/scores.csv", scores.str()});
    out.files.push_back({"xna/model_means.csv", means.str()});
    out.files.push_back({"xna/votes.csv", votes.str()});
    return out;
}

MetricOutput run_xdp(const Registry& registry, const std::vector<VqaAnswer>& answers, const MetricOptions& options) {
    std::vector<std::string> dims = options.xdp_dimensions;
    if (dims.empty()) {
        std::set<std::string> seen;
        for (const auto& a : answers) {
            if (a.question.type == QuestionType::Xdp) seen.insert(a.question.dimension_id);
        }
        for (const auto& d : registry.dimensions()) {
            if (seen.count(d.id)) dims.push_back(d.id);
        }
    }
    if (dims.empty()) throw Error("xdp: no xdp answers");
    MetricOutput out;
    out.metric = "xdp";
    CsvWriter csv({"source", "model", "lang", "pt", "dimension", "value", "frac_d0", "frac_d1", "frac_cant", "answers"});
    std::vector<RadarRow> radar;
    ojson rows = ojson::array();
    for (const auto& d : dims) {
        const auto& dim = registry.dimension(d);
        const auto report = xdp_report(answers, dim);
        if (report.empty()) throw Error("xdp: no answers for dimension '" + d + "'");
        for (const auto& r : report) {
            const auto& s = r.score;
            csv.field(r.source).field(r.model).field(r.lang).field(r.pt).field(d).field(s.value).field(s.frac_d0).field(s.frac_d1).field(s.frac_cant).field(s.answers);
            csv.end_row();
            rows.push_back({{"source", r.source}, {"model", r.model}, {"lang", r.lang}, {"pt", r.pt}, {"dimension", d}, {"value", s.value},
                            {"frac_d0", s.frac_d0}, {"frac_d1", s.frac_d1}, {"frac_cant", s.frac_cant}, {"answers", s.answers}});
            if (r.pt == kPooled) radar.push_back({r.source, r.model, r.lang, d, s.value});
        }
    }
    std::stable_sort(radar.begin(), radar.end(), [&](const RadarRow& a, const RadarRow& b) {
        return std::tuple(a.source, a.model, language_rank(registry, a.language)) < std::tuple(b.source, b.model, language_rank(registry, b.language));
    });
    out.summary["scores"] = std::move(rows);
    out.files.push_back({"xdp/scores.csv", csv.str()});
    out.files.push_back({"xdp/radar.csv", radar_csv(radar)});
    return out;
}

// ---------------------------------------------------------------------------
// Human evaluation
// ---------------------------------------------------------------------------

MetricOutput run_humaneval(const std::vector<Annotation>& annotations, const std::map<std::string, std::map<std::string, std::string>>& auto_labels,
                           const MetricOptions& options) {
    const auto tables = pivot_annotations(annotations, options.annotators_per_item);
    MetricOutput out;
    out.metric = "humaneval";
    CsvWriter kappa_csv({"question", "kappa", "p_bar", "p_bar_e", "items", "annotators", "categories", "degenerate"});
    CsvWriter majority_csv({"question", "item", "label"});
    CsvWriter agreement_csv({"question", "items", "agreement"});
    out.summary["questions"] = ojson::object();
    for (const auto& [question, table] : tables) {
        const KappaResult k = fleiss_kappa(table);
        kappa_csv.field(question);
        if (k.degenerate) {
            kappa_csv.field("");
        } else {
            kappa_csv.field(k.kappa);
        }
        kappa_csv.field(k.p_bar).field(k.p_bar_e).field(k.n_items).field(k.n_annotators).field(k.n_categories).field(k.degenerate ? "true" : "false");
        kappa_csv.end_row();
        ojson q;
        q["kappa"] = k.degenerate ? ojson(nullptr) : ojson(k.kappa);
        q["p_bar"] = k.p_bar;
        q["p_bar_e"] = k.p_bar_e;
        q["items"] = k.n_items;
        q["annotators"] = k.n_annotators;
        q["categories"] = table.categories;
        q["degenerate"] = k.degenerate;
        const auto majority = human_majority(table);
        std::map<std::string, std::string> human;
        for (std::size_t i = 0; i < majority.size(); ++i) {
            majority_csv.field(question).field(table.item_ids[i]).field(majority[i]);
            majority_csv.end_row();
            human[table.item_ids[i]] = majority[i];
        }
        if (const auto it = auto_labels.find(question); it != auto_labels.end()) {
            double rate = 0.0;
            try {
                rate = agreement_rate(it->second, human);
            } catch (const Error& e) {
                throw Error("question '" + question + "': " + e.what());
            }
            agreement_csv.field(question).field(human.size()).field(rate);
            agreement_csv.end_row();
            q["agreement"] = rate;
        }
        out.summary["questions"][question] = std::move(q);
    }
    for (const auto& [question, _] : auto_labels) {
        if (!tables.count(question)) throw Error("automatic labels for question '" + question + "' have no annotations");
    }
    out.files.push_back({"humaneval/kappa.csv", kappa_csv.str()});
    out.files.push_back({"humaneval/majority.csv", majority_csv.str()});
    if (!auto_labels.empty()) out.files.push_back({"humaneval/agreement.csv", agreement_csv.str()});
    return out;
}

std::vector<std::string> write_outputs(const fs::path& out_dir, const MetricOutput& output) {
    std::vector<std::string> written;
    for (const auto& f : output.files) {
        const fs::path p = out_dir / f.path;
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw Error("cannot create '" + p.parent_path().string() + "': " + ec.message());
        write_file_atomic(p, f.content);
        written.push_back(f.path);
    }
    const std::string summary_path = output.metric + "/summary.json";
    const fs::path p = out_dir / summary_path;
    fs::create_directories(p.parent_path());
    write_file_atomic(p, output.summary.dump(1) + "\n");
    written.push_back(summary_path);
    return written;
}

// ---------------------------------------------------------------------------
// Run config
// ---------------------------------------------------------------------------

fs::path RunConfig::resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

ojson RunConfig::snapshot() const {
    ojson j;
    if (registry) j["registry"] = *registry;
    j["archives"] = archives;
    j["answers"] = answers;
    j["model_configs"] = model_configs;
    if (annotations) j["annotations"] = *annotations;
    if (auto_labels) j["auto_labels"] = *auto_labels;
    j["stages"] = stages;
    j["metrics"] = metrics;
    j["order"] = std::string(to_string(options.order));
    j["normalize"] = options.normalize;
    j["xna_pts"] = options.xna_pts;
    j["xdp_dimensions"] = options.xdp_dimensions;
    if (options.annotators_per_item) j["annotators_per_item"] = *options.annotators_per_item;
    return j;
}

RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir) {
    static const std::set<std::string> known{"registry", "archives", "answers", "model_configs", "annotations", "auto_labels", "output_dir",
                                             "stages", "metrics", "order", "normalize", "xna_pts", "xdp_dimensions", "annotators_per_item"};
    if (!j.is_object()) throw Error("run config must be a JSON object");
    for (const auto& [k, _] : j.items()) {
        if (!known.count(k)) throw Error("run config: unknown key '" + k + "'");
    }
    RunConfig c;
    c.base_dir = base_dir;
    try {
        if (j.contains("registry")) c.registry = j["registry"].get<std::string>();
        c.archives = j.value("archives", std::vector<std::string>{});
        c.answers = j.value("answers", std::vector<std::string>{});
        c.model_configs = j.value("model_configs", std::vector<std::string>{});
        if (j.contains("annotations")) c.annotations = j["annotations"].get<std::string>();
        if (j.contains("auto_labels")) c.auto_labels = j["auto_labels"].get<std::string>();
        c.output_dir = j.value("output_dir", std::string());
        if (j.contains("stages")) c.stages = j["stages"].get<std::vector<std::string>>();
        c.metrics = j.value("metrics", std::vector<std::string>{});
        c.options.order = parse_nationality_order(j.value("order", std::string("primary")));
        c.options.normalize = j.value("normalize", true);
        c.options.xna_pts = j.value("xna_pts", std::vector<std::string>{});
        c.options.xdp_dimensions = j.value("xdp_dimensions", std::vector<std::string>{});
        if (j.contains("annotators_per_item")) c.options.annotators_per_item = j["annotators_per_item"].get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("run config: ") + e.what());
    }
    return c;
}

RunConfig read_run_config(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
    try {
        return parse_run_config(j, path.parent_path());
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

namespace {

bool has(const std::vector<std::string>& v, std::string_view x) { return std::find(v.begin(), v.end(), x) != v.end(); }

bool store_metric(std::string_view m) { return m == "na" || m == "dp" || m == "cd" || m == "ccs" || m == "coverage"; }
bool answer_metric(std::string_view m) { return m == "xna" || m == "xdp"; }

std::vector<std::string> selected_metrics(const RunConfig& c) {
    if (!c.metrics.empty()) return c.metrics;
    std::vector<std::string> out;
    for (auto m : kAllMetrics) {
        if ((store_metric(m) && !c.archives.empty()) || (answer_metric(m) && !c.answers.empty()) || (m == "humaneval" && c.annotations))
            out.emplace_back(m);
    }
    return out;
}

}  // namespace

void validate_run_config(const RunConfig& c) {
    for (const auto& s : c.stages) {
        if (std::find(std::begin(kAllStages), std::end(kAllStages), s) == std::end(kAllStages)) throw Error("run config: unknown stage '" + s + "'");
    }
    for (const auto& m : c.metrics) {
        if (std::find(std::begin(kAllMetrics), std::end(kAllMetrics), m) == std::end(kAllMetrics)) throw Error("run config: unknown metric '" + m + "'");
    }
    if (c.output_dir.empty()) throw Error("run config: output_dir is required");
    const auto need_file = [&](const std::string& p, const char* what) {
        const auto path = c.resolve(p);
        if (!fs::is_regular_file(path)) throw Error(std::string("run config: ") + what + " '" + path.string() + "' does not exist");
    };
    if (c.registry) need_file(*c.registry, "registry");
    for (const auto& a : c.archives) {
        const auto path = c.resolve(a);
        if (!fs::is_directory(path)) throw Error("run config: archive '" + path.string() + "' does not exist");
        for (const char* f : {"manifest.json", "embeddings.f32"}) {
            if (!fs::is_regular_file(path / f)) throw Error("run config: archive '" + path.string() + "' lacks " + f);
        }
    }
    for (const auto& a : c.answers) need_file(a, "answer file");
    for (const auto& m : c.model_configs) need_file(m, "model config");
    if (c.annotations) need_file(*c.annotations, "annotations");
    if (c.auto_labels) need_file(*c.auto_labels, "auto labels");
    if (has(c.stages, "prompts") && c.model_configs.empty()) throw Error("run config: stage 'prompts' needs model_configs");
    if (has(c.stages, "metrics")) {
        for (const auto& m : selected_metrics(c)) {
            if (store_metric(m) && c.archives.empty()) throw Error("run config: metric '" + m + "' needs archives");
            if (answer_metric(m) && c.answers.empty()) throw Error("run config: metric '" + m + "' needs answers");
            if (m == "humaneval" && !c.annotations) throw Error("run config: metric 'humaneval' needs annotations");
        }
    }
    const auto out = c.resolve(c.output_dir);
    if (fs::exists(out) && !fs::is_directory(out)) throw Error("run config: output_dir '" + out.string() + "' is not a directory");
}

ojson RunRecord::to_json() const {
    ojson j;
    j["tool_version"] = tool_version;
    j["registry_version"] = registry_version;
    j["config"] = config;
    j["files"] = files;
    return j;
}

RunRecord run(const RunConfig& config) {
    validate_run_config(config);
    const auto started = std::chrono::steady_clock::now();
    const fs::path out_dir = config.resolve(config.output_dir);
    const Registry registry = load_ontology(config.registry ? std::optional<fs::path>(config.resolve(*config.registry)) : std::nullopt);

    RunRecord record;
    record.config = config.snapshot();
    record.tool_version = std::string(kToolVersion);
    record.registry_version = registry.version();

    const auto write_record = [&](const std::string& status, const std::string& failed_stage, const std::string& error) {
        ojson j = record.to_json();
        j["status"] = status;
        if (!failed_stage.empty()) {
            j["failed_stage"] = failed_stage;
            j["error"] = error;
        }
        fs::create_directories(out_dir);
        write_file_atomic(out_dir / "run_record.json", j.dump(1) + "\n");
    };

    std::string stage;
    try {
        std::optional<EmbeddingStore> store;
        std::vector<VqaAnswer> answers;
        std::size_t excluded = 0;
        const auto load_inputs = [&] {
            if (store || (config.archives.empty() && config.answers.empty())) return;
            std::vector<EmbeddingStore> parts;
            for (const auto& a : config.archives) parts.push_back(ingest_archive(config.resolve(a)));
            store = EmbeddingStore::merge(parts);
            for (const auto& a : config.answers) {
                AnswerFile f = read_answers(config.resolve(a), &registry);
                excluded += f.excluded_errors;
                answers.insert(answers.end(), std::make_move_iterator(f.answers.begin()), std::make_move_iterator(f.answers.end()));
            }
        };

        if (has(config.stages, "prompts")) {
            stage = "prompts";
            for (const auto& m : config.model_configs) {
                const auto files = write_outputs(out_dir, run_prompts(registry, read_model_config(config.resolve(m), registry)));
                auto& dst = record.files["prompts"];
                dst.insert(dst.end(), files.begin(), files.end());
            }
        }
        if (has(config.stages, "ingest")) {
            stage = "ingest";
            load_inputs();
            MetricOutput ingest;
            ingest.metric = "ingest";
            ingest.summary["rows"] = store ? store->size() : 0;
            ingest.summary["dim"] = store ? store->dim() : 0;
            ingest.summary["max_norm_deviation"] = store ? store->max_norm_deviation() : 0.0;
            ingest.summary["answers"] = answers.size();
            ingest.summary["excluded_error_answers"] = excluded;
            record.files["ingest"] = write_outputs(out_dir, ingest);
        }
        std::vector<MetricOutput> results;
        if (has(config.stages, "metrics")) {
            load_inputs();
            for (const auto& m : selected_metrics(config)) {
                stage = "metrics/" + m;
                if (m == "na") results.push_back(run_na(registry, *store, config.options));
                if (m == "dp") results.push_back(run_dp(registry, *store, config.options));
                if (m == "cd") results.push_back(run_cd(registry, *store, config.options));
                if (m == "ccs") results.push_back(run_ccs(registry, *store, config.options));
                if (m == "coverage") results.push_back(run_coverage(registry, *store, config.options));
                if (m == "xna") results.push_back(run_xna(registry, answers, config.options));
                if (m == "xdp") results.push_back(run_xdp(registry, answers, config.options));
                if (m == "humaneval") {
                    const auto rows = parse_annotations_csv(read_file(config.resolve(*config.annotations)));
                    std::map<std::string, std::map<std::string, std::string>> labels;
                    if (config.auto_labels) labels = parse_auto_labels(read_file(config.resolve(*config.auto_labels)));
                    results.push_back(run_humaneval(rows, labels, config.options));
                }
            }
        }
        if (has(config.stages, "reports")) {
            stage = "reports";
            for (const auto& r : results) record.files[r.metric] = write_outputs(out_dir, r);
        }
    } catch (const std::exception& e) {
        write_record("failed", stage, e.what());
        throw Error("stage '" + stage + "': " + e.what());
    }
    record.files["record"] = {"run_record.json"};
    write_record("ok", "", "");
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return record;
}

}  // namespace cultprobe
