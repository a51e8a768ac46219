#pragma once

// Batched similarity kernels behind the intrinsic metrics.
//
// Every kernel has an OpenMP version (namespace kernels) and a serial
// reference (namespace kernels::reference). Both evaluate each output element
// with the same per-element routine and fixed summation order, so their
// results are bit-identical; tests assert that and the benchmark compares
// their speed.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cultprobe/embedding_store.hpp"
#include "cultprobe/matrix.hpp"

namespace cultprobe::kernels {

using RowSet = std::vector<std::size_t>;
// concept id -> rows of one language's set for that concept
using ConceptSets = std::map<std::string, RowSet>;

struct CcsCell {
    double value = 0.0;
    std::size_t concepts_used = 0;
    std::vector<std::string> skipped_concepts;
};

// Max-shifted softmax with natural exponent and no temperature.
std::vector<double> softmax(std::span<const double> scores);

// out(i, j) = cosine(rows_a[i], rows_b[j])
Matrix cosine_matrix(const EmbeddingStore& store, std::span<const std::size_t> rows_a, std::span<const std::size_t> rows_b);

// Row s: mean over the images of set s of softmax(cosines to class_rows),
// renormalized to sum 1.
Matrix na_distributions(const EmbeddingStore& store, std::span<const RowSet> sets, std::span<const std::size_t> class_rows);

// Entry s: mean over the images of set s of cosine(image, targets[s]).
std::vector<double> mean_cosine_to_target(const EmbeddingStore& store, std::span<const RowSet> sets, std::span<const std::size_t> targets);

// Mean over all (i, j) pairs of cosine(a[i], b[j]); row sums are formed
// first, then added in row order.
double mean_pairwise_cosine(const EmbeddingStore& store, std::span<const std::size_t> a, std::span<const std::size_t> b);

// cells[l1][l2]: mean over concepts present in both of
// mean_pairwise_cosine(images[l1][c], baselines[l2][c]).
std::vector<std::vector<CcsCell>> ccs_cells(const EmbeddingStore& store, std::span<const ConceptSets> images, std::span<const ConceptSets> baselines);

namespace reference {

Matrix cosine_matrix(const EmbeddingStore& store, std::span<const std::size_t> rows_a, std::span<const std::size_t> rows_b);
Matrix na_distributions(const EmbeddingStore& store, std::span<const RowSet> sets, std::span<const std::size_t> class_rows);
std::vector<double> mean_cosine_to_target(const EmbeddingStore& store, std::span<const RowSet> sets, std::span<const std::size_t> targets);
double mean_pairwise_cosine(const EmbeddingStore& store, std::span<const std::size_t> a, std::span<const std::size_t> b);
std::vector<std::vector<CcsCell>> ccs_cells(const EmbeddingStore& store, std::span<const ConceptSets> images, std::span<const ConceptSets> baselines);

}  // namespace reference

}  // namespace cultprobe::kernels
