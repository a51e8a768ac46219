#include "cultprobe/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "cultprobe/error.hpp"

namespace cultprobe::kernels {

namespace {

void na_row(const EmbeddingStore& store, const RowSet& set, std::span<const std::size_t> class_rows, std::span<double> out) {
    if (set.empty()) throw Error("national association: empty image set");
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> scores(class_rows.size());
    for (std::size_t image : set) {
        for (std::size_t j = 0; j < class_rows.size(); ++j) scores[j] = cosine(store.row(image), store.row(class_rows[j]));
        const auto p = softmax(scores);
        for (std::size_t j = 0; j < p.size(); ++j) out[j] += p[j];
    }
    double total = 0.0;
    for (double& v : out) {
        v /= static_cast<double>(set.size());
        total += v;
    }
    for (double& v : out) v /= total;
}

double mean_to_target(const EmbeddingStore& store, const RowSet& set, std::size_t target) {
    if (set.empty()) throw Error("empty image set");
    double sum = 0.0;
    for (std::size_t image : set) sum += cosine(store.row(image), store.row(target));
    return sum / static_cast<double>(set.size());
}

double pairwise_row_sum(const EmbeddingStore& store, std::size_t a, std::span<const std::size_t> b) {
    double s = 0.0;
    for (std::size_t j : b) s += cosine(store.row(a), store.row(j));
    return s;
}

double pairwise_mean_from_rows(std::span<const double> row_sums, std::size_t nb) {
    double total = 0.0;
    for (double s : row_sums) total += s;
    return total / (static_cast<double>(row_sums.size()) * static_cast<double>(nb));
}

void check_pairwise(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    if (a.empty() || b.empty()) throw Error("pairwise similarity of an empty set");
}

CcsCell ccs_cell(const EmbeddingStore& store, const ConceptSets& images, const ConceptSets& baselines) {
    CcsCell cell;
    double sum = 0.0;
    for (const auto& [concept_id, rows] : images) {
        const auto it = baselines.find(concept_id);
        if (it == baselines.end() || rows.empty() || it->second.empty()) {
            cell.skipped_concepts.push_back(concept_id);
            continue;
        }
        std::vector<double> row_sums(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) row_sums[i] = pairwise_row_sum(store, rows[i], it->second);
        sum += pairwise_mean_from_rows(row_sums, it->second.size());
        ++cell.concepts_used;
    }
    for (const auto& [concept_id, _] : baselines) {
        if (!images.count(concept_id)) cell.skipped_concepts.push_back(concept_id);
    }
    std::sort(cell.skipped_concepts.begin(), cell.skipped_concepts.end());
    cell.value = cell.concepts_used > 0 ? sum / static_cast<double>(cell.concepts_used) : std::nan("");
    return cell;
}

}  // namespace

std::vector<double> softmax(std::span<const double> scores) {
    if (scores.empty()) throw Error("softmax of an empty vector");
    const double peak = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - peak);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

Matrix cosine_matrix(const EmbeddingStore& store, std::span<const std::size_t> rows_a, std::span<const std::size_t> rows_b) {
    Matrix out(rows_a.size(), rows_b.size());
    const auto n = static_cast<std::ptrdiff_t>(rows_a.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < rows_b.size(); ++j)
            out(static_cast<std::size_t>(i), j) = cosine(store.row(rows_a[static_cast<std::size_t>(i)]), store.row(rows_b[j]));
    }
    return out;
}

Matrix na_distributions(const EmbeddingStore& store, std::span<const RowSet> sets, std::span<const std::size_t> class_rows) {
    if (class_rows.empty()) throw Error("national association needs at least one nationality");
    for (const auto& s : sets) {
        if (s.empty()) throw Error("national association: empty image set");
    }
    Matrix out(sets.size(), class_rows.size());
    const auto n = static_cast<std::ptrdiff_t>(sets.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t s = 0; s < n; ++s) na_row(store, sets[static_cast<std::size_t>(s)], class_rows, out.row(static_cast<std::size_t>(s)));
    return out;
}

std::vector<double> mean_cosine_to_target(const EmbeddingStore& store, std::span<const RowSet> sets, std::span<const std::size_t> targets) {
    if (sets.size() != targets.size()) throw Error("mean_cosine_to_target: one target per set required");
    for (const auto& s : sets) {
        if (s.empty()) throw Error("empty image set");
    }
    std::vector<double> out(sets.size());
    const auto n = static_cast<std::ptrdiff_t>(sets.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t s = 0; s < n; ++s) {
        const auto i = static_cast<std::size_t>(s);
        out[i] = mean_to_target(store, sets[i], targets[i]);
    }
    return out;
}

double mean_pairwise_cosine(const EmbeddingStore& store, std::span<const std::size_t> a, std::span<const std::size_t> b) {
    check_pairwise(a, b);
    std::vector<double> row_sums(a.size());
    const auto n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) row_sums[static_cast<std::size_t>(i)] = pairwise_row_sum(store, a[static_cast<std::size_t>(i)], b);
    return pairwise_mean_from_rows(row_sums, b.size());
}

std::vector<std::vector<CcsCell>> ccs_cells(const EmbeddingStore& store, std::span<const ConceptSets> images, std::span<const ConceptSets> baselines) {
    if (images.size() != baselines.size()) throw Error("ccs: image and baseline language lists differ in length");
    const std::size_t n = images.size();
    std::vector<std::vector<CcsCell>> out(n, std::vector<CcsCell>(n));
    const auto cells = static_cast<std::ptrdiff_t>(n * n);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c = 0; c < cells; ++c) {
        const auto l1 = static_cast<std::size_t>(c) / n;
        const auto l2 = static_cast<std::size_t>(c) % n;
        out[l1][l2] = ccs_cell(store, images[l1], baselines[l2]);
    }
    return out;
}

namespace reference {

Matrix cosine_matrix(const EmbeddingStore& store, std::span<const std::size_t> rows_a, std::span<const std::size_t> rows_b) {
    Matrix out(rows_a.size(), rows_b.size());
    for (std::size_t i = 0; i < rows_a.size(); ++i) {
        for (std::size_t j = 0; j < rows_b.size(); ++j) out(i, j) = cosine(store.row(rows_a[i]), store.row(rows_b[j]));
    }
    return out;
}

Matrix na_distributions(const EmbeddingStore& store, std::span<const RowSet> sets, std::span<const std::size_t> class_rows) {
    if (class_rows.empty()) throw Error("national association needs at least one nationality");
    Matrix out(sets.size(), class_rows.size());
    for (std::size_t s = 0; s < sets.size(); ++s) na_row(store, sets[s], class_rows, out.row(s));
    return out;
}

std::vector<double> mean_cosine_to_target(const EmbeddingStore& store, std::span<const RowSet> sets, std::span<const std::size_t> targets) {
    if (sets.size() != targets.size()) throw Error("mean_cosine_to_target: one target per set required");
    std::vector<double> out(sets.size());
    for (std::size_t s = 0; s < sets.size(); ++s) out[s] = mean_to_target(store, sets[s], targets[s]);
    return out;
}

double mean_pairwise_cosine(const EmbeddingStore& store, std::span<const std::size_t> a, std::span<const std::size_t> b) {
    check_pairwise(a, b);
    std::vector<double> row_sums(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) row_sums[i] = pairwise_row_sum(store, a[i], b);
    return pairwise_mean_from_rows(row_sums, b.size());
}

std::vector<std::vector<CcsCell>> ccs_cells(const EmbeddingStore& store, std::span<const ConceptSets> images, std::span<const ConceptSets> baselines) {
    if (images.size() != baselines.size()) throw Error("ccs: image and baseline language lists differ in length");
    std::vector<std::vector<CcsCell>> out(images.size(), std::vector<CcsCell>(images.size()));
    for (std::size_t l1 = 0; l1 < images.size(); ++l1) {
        for (std::size_t l2 = 0; l2 < images.size(); ++l2) out[l1][l2] = ccs_cell(store, images[l1], baselines[l2]);
    }
    return out;
}

}  // namespace reference

}  // namespace cultprobe::kernels
