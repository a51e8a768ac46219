#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cultprobe {

enum class EmbeddingRole { Image, TextBaseline, VisualBaseline };

std::string_view to_string(EmbeddingRole role);
EmbeddingRole parse_embedding_role(std::string_view text);

// Identity of one stored row.
//
// Image rows carry (model, concept_id, pt, lang, image_index). Text baselines
// carry the hash of their prompt text; a text row may also carry set context
// (free-text image descriptions do). Visual baselines are image rows of an
// external reference set, e.g. natural photos.
struct SetKey {
    EmbeddingRole role = EmbeddingRole::Image;
    std::string model;
    std::string concept_id;
    std::string pt;
    std::string lang;
    std::optional<int> image_index;
    std::string text;
    std::uint64_t text_hash = 0;

    static SetKey image(std::string model, std::string concept_id, std::string pt, std::string lang, int index);
    static SetKey visual(std::string model, std::string concept_id, std::string pt, std::string lang, int index);
    // Context-free text baseline, e.g. "a photo with spanish style".
    static SetKey text_baseline(std::string text);
    // Text tied to one image, e.g. a VQA description.
    static SetKey description(std::string model, std::string concept_id, std::string pt, std::string lang, int index, std::string text);

    bool has_context() const { return !model.empty() || !concept_id.empty() || !pt.empty() || !lang.empty() || image_index.has_value(); }
    std::string describe() const;

    // The text itself is not part of the identity, its hash is.
    bool operator==(const SetKey& other) const;
};

struct SetKeyHash {
    std::size_t operator()(const SetKey& key) const;
};

// Identifies one image set (the K images of one generation tuple).
struct SetGroup {
    std::string model;
    std::string concept_id;
    std::string pt;
    std::string lang;

    auto operator<=>(const SetGroup&) const = default;
};

// Unit-normalized float32 rows indexed by SetKey. Immutable once built.
class EmbeddingStore {
public:
    EmbeddingStore() = default;

    // Validates and renormalizes. Throws on duplicate keys, size mismatch,
    // non-finite values and rows with norm below 1e-8.
    static EmbeddingStore from_rows(std::size_t dim, std::vector<SetKey> keys, std::vector<float> data);
    static EmbeddingStore merge(const std::vector<EmbeddingStore>& parts);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return keys_.size(); }
    const std::vector<SetKey>& keys() const { return keys_; }
    const SetKey& key(std::size_t row) const { return keys_[row]; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
    std::span<const float> data() const { return data_; }

    std::optional<std::size_t> find(const SetKey& key) const;
    // Throws naming the key when absent.
    std::size_t row_of(const SetKey& key) const;
    std::span<const float> vector_of(const SetKey& key) const { return row(row_of(key)); }
    // Context-free text baseline lookup by prompt text.
    std::optional<std::size_t> find_text(std::string_view text) const;
    std::size_t text_row(std::string_view text) const;

    // Rows of one role grouped by set, each group sorted by image index.
    std::map<SetGroup, std::vector<std::size_t>> sets(EmbeddingRole role = EmbeddingRole::Image) const;

    // max over rows of | ||row|| - 1 |
    double max_norm_deviation() const;

private:
    std::size_t dim_ = 0;
    std::vector<SetKey> keys_;
    std::vector<float> data_;
    std::unordered_map<SetKey, std::size_t, SetKeyHash> index_;
    std::unordered_map<std::uint64_t, std::size_t> text_index_;
};

// Archive directory: manifest.json {dim, count, keys} + embeddings.f32
// (count*dim little-endian float32, row-major).
EmbeddingStore ingest_archive(const std::filesystem::path& dir);
void export_archive(const EmbeddingStore& store, const std::filesystem::path& dir);

// Cosine similarity in double precision. Identical inputs give exactly 1.
double cosine(std::span<const float> a, std::span<const float> b);

// Mean of the rows, renormalized. Errors on an empty list, a missing key or a
// (near) zero mean.
std::vector<float> set_mean(std::span<const SetKey> keys, const EmbeddingStore& store);

std::vector<float> normalized(std::span<const float> v);

}  // namespace cultprobe
