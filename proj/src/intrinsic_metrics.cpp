#include "cultprobe/intrinsic_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cultprobe/error.hpp"

namespace cultprobe {

namespace {

std::vector<std::size_t> rows_for(std::span<const SetKey> keys, const EmbeddingStore& store) {
    std::vector<std::size_t> rows;
    rows.reserve(keys.size());
    for (const auto& k : keys) rows.push_back(store.row_of(k));
    return rows;
}

void require_images(std::span<const SetKey> keys, const char* what) {
    if (keys.empty()) throw Error(std::string(what) + ": empty image set");
    for (const auto& k : keys) {
        if (k.role != EmbeddingRole::Image && k.role != EmbeddingRole::VisualBaseline)
            throw Error(std::string(what) + ": " + k.describe() + " is not an image row");
    }
}

const std::string& single_concept(std::span<const SetKey> keys, const char* what) {
    const std::string& concept_id = keys.front().concept_id;
    for (const auto& k : keys) {
        if (k.concept_id != concept_id) throw Error(std::string(what) + ": concept mismatch '" + concept_id + "' vs '" + k.concept_id + "'");
    }
    return concept_id;
}

}  // namespace

std::size_t NaDistribution::argmax() const {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

NaDistribution national_association(std::span<const SetKey> image_keys, std::span<const SetKey> nationality_text_keys,
                                    std::span<const std::string> nationality_names, const EmbeddingStore& store) {
    require_images(image_keys, "national association");
    if (nationality_text_keys.empty()) throw Error("national association needs at least one nationality");
    if (nationality_text_keys.size() != nationality_names.size()) throw Error("national association: one name per nationality key required");
    const std::vector<kernels::RowSet> sets{rows_for(image_keys, store)};
    const auto classes = rows_for(nationality_text_keys, store);
    const Matrix dist = kernels::na_distributions(store, sets, classes);
    NaDistribution out;
    out.nationalities.assign(nationality_names.begin(), nationality_names.end());
    out.probs.assign(dist.row(0).begin(), dist.row(0).end());
    return out;
}

AccuracyResult confusion_accuracy(const Matrix& matrix) {
    if (matrix.rows() == 0) throw Error("confusion_accuracy: empty matrix");
    if (matrix.rows() != matrix.cols())
        throw Error("confusion_accuracy: matrix is " + std::to_string(matrix.rows()) + "x" + std::to_string(matrix.cols()) + ", not square");
    AccuracyResult r;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        const auto row = matrix.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < row.size(); ++j) {
            if (row[j] > row[best]) best = j;
        }
        if (std::count(row.begin(), row.end(), row[best]) > 1) ++r.tied_rows;
        r.argmax.push_back(best);
        if (best == i) ++hits;
    }
    r.accuracy = static_cast<double>(hits) / static_cast<double>(matrix.rows());
    return r;
}

double dimension_projection(std::span<const SetKey> image_keys, const SetKey& dimension_text_key, const EmbeddingStore& store) {
    require_images(image_keys, "dimension projection");
    const std::vector<kernels::RowSet> sets{rows_for(image_keys, store)};
    const std::vector<std::size_t> target{store.row_of(dimension_text_key)};
    return kernels::mean_cosine_to_target(store, sets, target).front();
}

AxisSpec default_y_axis() { return {"traditional_rational", true}; }
AxisSpec default_x_axis() { return {"survival_self_expression", true}; }

std::map<std::string, std::string> default_language_groups() {
    return {{"ES", "catholic_europe"}, {"FR", "catholic_europe"}, {"RU", "orthodox_europe"},
            {"EL", "orthodox_europe"}, {"HI", "west_south_asia"}, {"IW", "west_south_asia"}};
}

CultureMap culture_map_axes(const std::map<std::string, std::map<std::string, DimensionScorePair>>& pole_scores, const AxisSpec& x_axis,
                            const AxisSpec& y_axis, const std::map<std::string, std::string>& language_groups) {
    const auto axis_value = [](const std::map<std::string, DimensionScorePair>& dims, const AxisSpec& axis, const std::string& lang) {
        const auto it = dims.find(axis.dimension_id);
        if (it == dims.end()) throw Error("culture map: language '" + lang + "' lacks dimension '" + axis.dimension_id + "'");
        const auto& p = it->second;
        return axis.high_is_negative_pole ? p.pole_negative_score - p.pole_positive_score : p.pole_positive_score - p.pole_negative_score;
    };
    CultureMap map;
    std::map<std::string, std::vector<const CulturePoint*>> members;
    for (const auto& [lang, dims] : pole_scores) {
        CulturePoint p;
        p.language = lang;
        p.x = axis_value(dims, x_axis, lang);
        p.y = axis_value(dims, y_axis, lang);
        const auto g = language_groups.find(lang);
        p.group = g == language_groups.end() ? lang : g->second;
        map.points.push_back(std::move(p));
    }
    for (const auto& p : map.points) members[p.group].push_back(&p);
    for (const auto& [group, pts] : members) {
        CultureGroupStats s;
        s.group = group;
        const double n = static_cast<double>(pts.size());
        for (const auto* p : pts) {
            s.languages.push_back(p->language);
            s.mean_x += p->x;
            s.mean_y += p->y;
        }
        s.mean_x /= n;
        s.mean_y /= n;
        for (const auto* p : pts) {
            s.std_x += (p->x - s.mean_x) * (p->x - s.mean_x);
            s.std_y += (p->y - s.mean_y) * (p->y - s.mean_y);
        }
        s.std_x = std::sqrt(s.std_x / n);
        s.std_y = std::sqrt(s.std_y / n);
        map.groups.push_back(std::move(s));
    }
    return map;
}

double cultural_distance(std::span<const SetKey> image_keys, const SetKey& en_reference_text_key, const EmbeddingStore& store) {
    require_images(image_keys, "cultural distance");
    const std::string& concept_id = single_concept(image_keys, "cultural distance");
    if (!en_reference_text_key.concept_id.empty() && en_reference_text_key.concept_id != concept_id)
        throw Error("cultural distance: concept mismatch, images of '" + concept_id + "' against reference of '" + en_reference_text_key.concept_id + "'");
    const std::vector<kernels::RowSet> sets{rows_for(image_keys, store)};
    const std::vector<std::size_t> target{store.row_of(en_reference_text_key)};
    return cultural_distance_from_mean_cosine(kernels::mean_cosine_to_target(store, sets, target).front());
}

double cross_cultural_similarity(std::span<const SetKey> image_keys_l1, std::span<const SetKey> baseline_image_keys_l2, const EmbeddingStore& store) {
    require_images(image_keys_l1, "cross-cultural similarity");
    require_images(baseline_image_keys_l2, "cross-cultural similarity");
    const std::string& c1 = single_concept(image_keys_l1, "cross-cultural similarity");
    const std::string& c2 = single_concept(baseline_image_keys_l2, "cross-cultural similarity");
    if (c1 != c2) throw Error("cross-cultural similarity: concept mismatch '" + c1 + "' vs '" + c2 + "'");
    return kernels::mean_pairwise_cosine(store, rows_for(image_keys_l1, store), rows_for(baseline_image_keys_l2, store));
}

NormalizedValues normalize_matrix(std::span<const double> values) {
    if (values.empty()) throw Error("normalize: no values");
    for (double v : values) {
        if (!std::isfinite(v)) throw Error("normalize: non-finite value");
    }
    NormalizedValues out;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    out.min = *lo;
    out.max = *hi;
    out.values.assign(values.begin(), values.end());
    if (out.max == out.min) {
        out.degenerate = true;
        return out;
    }
    const double range = out.max - out.min;
    for (double& v : out.values) v = (v - out.min) / range;
    return out;
}

CcsMatrix build_ccs_matrix(const std::vector<std::string>& labels, std::span<const kernels::ConceptSets> images,
                           std::span<const kernels::ConceptSets> baselines, const EmbeddingStore& store) {
    if (labels.size() < 2) throw Error("ccs matrix needs at least two languages");
    if (images.size() != labels.size() || baselines.size() != labels.size()) throw Error("ccs matrix: one image and baseline group per language");
    const auto cells = kernels::ccs_cells(store, images, baselines);
    const std::size_t n = labels.size();
    CcsMatrix m;
    m.labels = labels;
    m.raw = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto& cell = cells[i][j];
            for (const auto& c : cell.skipped_concepts) m.skips.push_back({labels[i], labels[j], c});
            if (cell.concepts_used == 0) throw Error("ccs matrix: no shared concept between " + labels[i] + " and " + labels[j]);
            m.raw(i, j) = cell.value;
        }
    }
    m.symmetrized = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m.symmetrized(i, j) = (m.raw(i, j) + m.raw(j, i)) / 2.0;
    }
    m.normalization = normalize_matrix(m.raw.values());
    m.normalized = Matrix(n, n);
    std::copy(m.normalization.values.begin(), m.normalization.values.end(), m.normalized.values().begin());
    return m;
}

double conceptual_coverage(std::span<const SetKey> description_text_keys, const SetKey& concept_text_key, const EmbeddingStore& store) {
    if (description_text_keys.empty()) throw Error("conceptual coverage: empty description set");
    const std::vector<kernels::RowSet> sets{rows_for(description_text_keys, store)};
    const std::vector<std::size_t> target{store.row_of(concept_text_key)};
    return kernels::mean_cosine_to_target(store, sets, target).front();
}

}  // namespace cultprobe
