#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "cultprobe/embedding_store.hpp"
#include "cultprobe/kernels.hpp"
#include "cultprobe/matrix.hpp"

namespace cultprobe {

// ---------------------------------------------------------------------------
// National association
// ---------------------------------------------------------------------------

struct NaDistribution {
    std::vector<std::string> nationalities;
    std::vector<double> probs;  // sums to 1

    std::size_t argmax() const;
};

// Softmax over the cosines between each image and the k nationality prompt
// embeddings, averaged over the images and renormalized.
NaDistribution national_association(std::span<const SetKey> image_keys, std::span<const SetKey> nationality_text_keys,
                                    std::span<const std::string> nationality_names, const EmbeddingStore& store);

// ---------------------------------------------------------------------------
// Confusion matrices
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
    std::vector<std::string> labels;  // ground truth rows, predicted columns
    Matrix rows;
};

struct AccuracyResult {
    double accuracy = 0.0;
    std::vector<std::size_t> argmax;  // per row, lowest index on ties
    std::size_t tied_rows = 0;
};

// ACC = (1/n) * #{i : argmax(row_i) = i}
AccuracyResult confusion_accuracy(const Matrix& matrix);

// ---------------------------------------------------------------------------
// Cultural dimensions
// ---------------------------------------------------------------------------

// Mean over the images of cosine(image, dimension prompt).
double dimension_projection(std::span<const SetKey> image_keys, const SetKey& dimension_text_key, const EmbeddingStore& store);

struct DimensionScorePair {
    std::string dimension_id;
    double pole_positive_score = 0.0;
    double pole_negative_score = 0.0;
};

// One map axis: value = score(high pole) - score(other pole).
struct AxisSpec {
    std::string dimension_id;
    bool high_is_negative_pole = false;
};

struct CulturePoint {
    std::string language;
    double x = 0.0;
    double y = 0.0;
    std::string group;
};

struct CultureGroupStats {
    std::string group;
    std::vector<std::string> languages;
    double mean_x = 0.0;
    double mean_y = 0.0;
    double std_x = 0.0;  // population standard deviation
    double std_y = 0.0;
};

struct CultureMap {
    std::vector<CulturePoint> points;
    std::vector<CultureGroupStats> groups;
};

// Default axes of the culture map: y = Rational - Traditional,
// x = Self-expression - Survival.
AxisSpec default_y_axis();
AxisSpec default_x_axis();
// Default region grouping; languages not listed form singleton groups.
std::map<std::string, std::string> default_language_groups();

// pole_scores: language -> (dimension id -> pair). Both axis dimensions must
// be present for every language.
CultureMap culture_map_axes(const std::map<std::string, std::map<std::string, DimensionScorePair>>& pole_scores, const AxisSpec& x_axis,
                            const AxisSpec& y_axis, const std::map<std::string, std::string>& language_groups);

// ---------------------------------------------------------------------------
// Cultural distance and cross-cultural similarity
// ---------------------------------------------------------------------------

inline constexpr double kCulturalDistanceScale = 100.0;

// (1 - c) * 100 for a mean cosine c. The mean of (1 - cos) equals 1 - mean(cos).
inline double cultural_distance_from_mean_cosine(double mean_cosine) { return (1.0 - mean_cosine) * kCulturalDistanceScale; }

// Mean over the images of (1 - cosine(image, EN reference prompt)) * 100.
double cultural_distance(std::span<const SetKey> image_keys, const SetKey& en_reference_text_key, const EmbeddingStore& store);

// Mean over all pairs of cosine(I_l1, Xv_l2).
double cross_cultural_similarity(std::span<const SetKey> image_keys_l1, std::span<const SetKey> baseline_image_keys_l2, const EmbeddingStore& store);

struct NormalizedValues {
    std::vector<double> values;
    double min = 0.0;
    double max = 0.0;
    bool degenerate = false;  // max == min, values returned unchanged
};

// Min-max normalization to [0, 1]. Non-finite input is an error.
NormalizedValues normalize_matrix(std::span<const double> values);

struct CcsSkip {
    std::string l1;
    std::string l2;
    std::string concept_id;
};

struct CcsMatrix {
    std::vector<std::string> labels;
    Matrix raw;          // raw[l1][l2], role-asymmetric
    Matrix symmetrized;  // (raw + raw^T) / 2
    Matrix normalized;   // min-max of raw, or raw itself when degenerate
    NormalizedValues normalization;
    std::vector<CcsSkip> skips;
};

// images/baselines: one ConceptSets per label, in label order.
CcsMatrix build_ccs_matrix(const std::vector<std::string>& labels, std::span<const kernels::ConceptSets> images,
                           std::span<const kernels::ConceptSets> baselines, const EmbeddingStore& store);

// ---------------------------------------------------------------------------
// Conceptual coverage
// ---------------------------------------------------------------------------

// Mean cosine between per-image description embeddings and the concept
// embedding. Cross-template normalization is normalize_matrix over the
// per-template scores.
double conceptual_coverage(std::span<const SetKey> description_text_keys, const SetKey& concept_text_key, const EmbeddingStore& store);

}  // namespace cultprobe
