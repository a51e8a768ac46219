#include "cultprobe/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cultprobe/error.hpp"
#include "cultprobe/util.hpp"

namespace cultprobe {

namespace {

constexpr double kMinNorm = 1e-8;
// Rows already this close to unit length are stored untouched, which keeps
// export -> ingest bit-identical.
constexpr double kUnitTolerance = 1e-6;

double norm_of(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
}

nlohmann::ordered_json key_to_ordered_json(const SetKey& k) {
    nlohmann::ordered_json j;
    j["role"] = std::string(to_string(k.role));
    if (!k.model.empty()) j["model"] = k.model;
    if (!k.concept_id.empty()) j["concept"] = k.concept_id;
    if (!k.pt.empty()) j["pt"] = k.pt;
    if (!k.lang.empty()) j["lang"] = k.lang;
    if (k.image_index) j["image_index"] = *k.image_index;
    if (k.role == EmbeddingRole::TextBaseline) {
        if (!k.text.empty()) j["text"] = k.text;
        j["text_hash"] = hex64(k.text_hash);
    }
    return j;
}

SetKey key_from_json(const nlohmann::json& j, std::size_t position) {
    const std::string where = "key #" + std::to_string(position);
    if (!j.is_object()) throw Error(where + " is not an object");
    SetKey k;
    k.role = parse_embedding_role(j.value("role", std::string("image")));
    k.model = j.value("model", std::string());
    k.concept_id = j.value("concept", std::string());
    k.pt = j.value("pt", std::string());
    k.lang = j.value("lang", std::string());
    if (j.contains("image_index")) {
        const int idx = j.at("image_index").get<int>();
        if (idx < 0) throw Error(where + " has a negative image_index");
        k.image_index = idx;
    }
    if (k.role == EmbeddingRole::TextBaseline) {
        k.text = j.value("text", std::string());
        if (!k.text.empty()) k.text_hash = fnv1a64(k.text);
        if (j.contains("text_hash")) {
            const auto declared = std::stoull(j.at("text_hash").get<std::string>(), nullptr, 16);
            if (!k.text.empty() && declared != k.text_hash) throw Error(where + ": text_hash does not match text \"" + k.text + "\"");
            k.text_hash = declared;
        } else if (k.text.empty()) {
            throw Error(where + ": text baseline needs text or text_hash");
        }
    } else if (!k.image_index) {
        throw Error(where + ": " + std::string(to_string(k.role)) + " row requires image_index");
    }
    return k;
}

}  // namespace

std::string_view to_string(EmbeddingRole role) {
    switch (role) {
        case EmbeddingRole::Image: return "image";
        case EmbeddingRole::TextBaseline: return "text";
        case EmbeddingRole::VisualBaseline: return "visual";
    }
    return "unknown";
}

EmbeddingRole parse_embedding_role(std::string_view text) {
    if (text == "image") return EmbeddingRole::Image;
    if (text == "text") return EmbeddingRole::TextBaseline;
    if (text == "visual") return EmbeddingRole::VisualBaseline;
    throw Error("unknown embedding role '" + std::string(text) + "'");
}

SetKey SetKey::image(std::string model, std::string concept_id, std::string pt, std::string lang, int index) {
    SetKey k;
    k.role = EmbeddingRole::Image;
    k.model = std::move(model);
    k.concept_id = std::move(concept_id);
    k.pt = std::move(pt);
    k.lang = std::move(lang);
    k.image_index = index;
    return k;
}

SetKey SetKey::visual(std::string model, std::string concept_id, std::string pt, std::string lang, int index) {
    SetKey k = image(std::move(model), std::move(concept_id), std::move(pt), std::move(lang), index);
    k.role = EmbeddingRole::VisualBaseline;
    return k;
}

SetKey SetKey::text_baseline(std::string text) {
    SetKey k;
    k.role = EmbeddingRole::TextBaseline;
    k.text_hash = fnv1a64(text);
    k.text = std::move(text);
    return k;
}

SetKey SetKey::description(std::string model, std::string concept_id, std::string pt, std::string lang, int index, std::string text) {
    SetKey k = text_baseline(std::move(text));
    k.model = std::move(model);
    k.concept_id = std::move(concept_id);
    k.pt = std::move(pt);
    k.lang = std::move(lang);
    k.image_index = index;
    return k;
}

std::string SetKey::describe() const {
    std::string s = std::string(to_string(role)) + "(";
    bool first = true;
    const auto add = [&](std::string_view name, const std::string& value) {
        if (value.empty()) return;
        if (!first) s += ", ";
        s += std::string(name) + "=" + value;
        first = false;
    };
    add("model", model);
    add("concept", concept_id);
    add("pt", pt);
    add("lang", lang);
    if (image_index) add("image", std::to_string(*image_index));
    if (role == EmbeddingRole::TextBaseline) add("text", text.empty() ? "#" + hex64(text_hash) : "\"" + text + "\"");
    return s + ")";
}

bool SetKey::operator==(const SetKey& o) const {
    return role == o.role && model == o.model && concept_id == o.concept_id && pt == o.pt && lang == o.lang && image_index == o.image_index &&
           text_hash == o.text_hash;
}

std::size_t SetKeyHash::operator()(const SetKey& k) const {
    std::uint64_t h = fnv1a64(k.model);
    h = fnv1a64(k.concept_id, h ^ 0x9e3779b97f4a7c15ULL);
    h = fnv1a64(k.pt, h);
    h = fnv1a64(k.lang, h);
    h ^= static_cast<std::uint64_t>(k.role) * 0x100000001b3ULL;
    h ^= static_cast<std::uint64_t>(k.image_index.value_or(-1) + 2) * 0xff51afd7ed558ccdULL;
    h ^= k.text_hash;
    return static_cast<std::size_t>(h);
}

EmbeddingStore EmbeddingStore::from_rows(std::size_t dim, std::vector<SetKey> keys, std::vector<float> data) {
    if (dim == 0 && !keys.empty()) throw Error("embedding dim must be positive");
    if (data.size() != keys.size() * dim)
        throw Error("embedding data holds " + std::to_string(data.size()) + " floats, expected " + std::to_string(keys.size()) + " x " +
                    std::to_string(dim));
    EmbeddingStore s;
    s.dim_ = dim;
    s.keys_ = std::move(keys);
    s.data_ = std::move(data);
    for (std::size_t r = 0; r < s.keys_.size(); ++r) {
        const SetKey& k = s.keys_[r];
        if (!s.index_.emplace(k, r).second) throw Error("duplicate key " + k.describe());
        if (k.role == EmbeddingRole::TextBaseline && !k.has_context()) s.text_index_.emplace(k.text_hash, r);
        std::span<float> row{s.data_.data() + r * dim, dim};
        if (!std::all_of(row.begin(), row.end(), [](float x) { return std::isfinite(x); }))
            throw Error("non-finite value in row for key " + k.describe());
        const double n = norm_of(row);
        if (n < kMinNorm) throw Error("zero-norm row for key " + k.describe());
        if (std::abs(n - 1.0) > kUnitTolerance) {
            for (float& x : row) x = static_cast<float>(static_cast<double>(x) / n);
        }
    }
    return s;
}

EmbeddingStore EmbeddingStore::merge(const std::vector<EmbeddingStore>& parts) {
    if (parts.empty()) return {};
    std::size_t dim = 0;
    std::vector<SetKey> keys;
    std::vector<float> data;
    for (const auto& p : parts) {
        if (p.size() == 0) continue;
        if (dim == 0) dim = p.dim();
        if (p.dim() != dim) throw Error("cannot merge archives of dims " + std::to_string(dim) + " and " + std::to_string(p.dim()));
        keys.insert(keys.end(), p.keys_.begin(), p.keys_.end());
        data.insert(data.end(), p.data_.begin(), p.data_.end());
    }
    return from_rows(dim, std::move(keys), std::move(data));
}

std::optional<std::size_t> EmbeddingStore::find(const SetKey& key) const {
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t EmbeddingStore::row_of(const SetKey& key) const {
    if (const auto r = find(key)) return *r;
    throw Error("missing key " + key.describe());
}

std::optional<std::size_t> EmbeddingStore::find_text(std::string_view text) const {
    const auto it = text_index_.find(fnv1a64(text));
    if (it == text_index_.end()) return std::nullopt;
    return it->second;
}

std::size_t EmbeddingStore::text_row(std::string_view text) const {
    if (const auto r = find_text(text)) return *r;
    throw Error("missing text embedding for \"" + std::string(text) + "\"");
}

std::map<SetGroup, std::vector<std::size_t>> EmbeddingStore::sets(EmbeddingRole role) const {
    std::map<SetGroup, std::vector<std::size_t>> out;
    for (std::size_t r = 0; r < keys_.size(); ++r) {
        const SetKey& k = keys_[r];
        if (k.role != role || !k.image_index) continue;
        out[SetGroup{k.model, k.concept_id, k.pt, k.lang}].push_back(r);
    }
    for (auto& [_, rows] : out) {
        std::sort(rows.begin(), rows.end(), [this](std::size_t a, std::size_t b) { return *keys_[a].image_index < *keys_[b].image_index; });
    }
    return out;
}

double EmbeddingStore::max_norm_deviation() const {
    double worst = 0.0;
    for (std::size_t r = 0; r < size(); ++r) worst = std::max(worst, std::abs(norm_of(row(r)) - 1.0));
    return worst;
}

EmbeddingStore ingest_archive(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    const auto data_path = dir / "embeddings.f32";
    try {
        nlohmann::json manifest;
        try {
            manifest = nlohmann::json::parse(read_file(manifest_path));
        } catch (const nlohmann::json::exception& e) {
            throw Error(std::string("manifest.json: ") + e.what());
        }
        const auto dim = manifest.at("dim").get<std::size_t>();
        const auto count = manifest.at("count").get<std::size_t>();
        const auto& jkeys = manifest.at("keys");
        if (!jkeys.is_array() || jkeys.size() != count)
            throw Error("manifest declares count " + std::to_string(count) + " but lists " + std::to_string(jkeys.size()) + " keys");
        std::vector<SetKey> keys;
        keys.reserve(count);
        for (std::size_t i = 0; i < jkeys.size(); ++i) keys.push_back(key_from_json(jkeys[i], i));

        const std::string raw = std::filesystem::exists(data_path) ? read_file(data_path) : std::string();
        const std::size_t expected = count * dim * sizeof(float);
        if (raw.size() != expected)
            throw Error("length mismatch: header declares " + std::to_string(count) + " x " + std::to_string(dim) + " floats (" +
                        std::to_string(expected) + " bytes) but embeddings.f32 holds " + std::to_string(raw.size()) + " bytes");
        std::vector<float> data(count * dim);
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::uint32_t bits = 0;
            std::memcpy(&bits, raw.data() + i * 4, 4);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
            data[i] = std::bit_cast<float>(bits);
        }
        return EmbeddingStore::from_rows(dim, std::move(keys), std::move(data));
    } catch (const nlohmann::json::exception& e) {
        throw Error(dir.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(dir.string() + ": " + e.what());
    }
}

void export_archive(const EmbeddingStore& store, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["dim"] = store.dim();
    manifest["count"] = store.size();
    manifest["keys"] = nlohmann::ordered_json::array();
    for (const auto& k : store.keys()) manifest["keys"].push_back(key_to_ordered_json(k));
    write_file_atomic(dir / "manifest.json", manifest.dump(1) + "\n");

    std::string raw(store.data().size() * 4, '\0');
    for (std::size_t i = 0; i < store.data().size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(store.data()[i]);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(raw.data() + i * 4, &bits, 4);
    }
    write_file_atomic(dir / "embeddings.f32", raw);
}

double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw Error("cosine: dim mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double dot = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        const double y = b[i];
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if (aa <= 0.0 || bb <= 0.0) throw Error("cosine: zero vector");
    // sqrt(s*s) == s exactly, so identical inputs give exactly 1.
    return std::clamp(dot / std::sqrt(aa * bb), -1.0, 1.0);
}

std::vector<float> set_mean(std::span<const SetKey> keys, const EmbeddingStore& store) {
    if (keys.empty()) throw Error("set_mean: empty key list");
    std::vector<double> acc(store.dim(), 0.0);
    for (const auto& k : keys) {
        const auto row = store.vector_of(k);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += row[i];
    }
    double n = 0.0;
    for (double& x : acc) {
        x /= static_cast<double>(keys.size());
        n += x * x;
    }
    n = std::sqrt(n);
    if (n < kMinNorm) throw Error("set_mean: zero mean vector");
    std::vector<float> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / n);
    return out;
}

std::vector<float> normalized(std::span<const float> v) {
    const double n = norm_of(v);
    if (n < kMinNorm) throw Error("cannot normalize a zero vector");
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
    return out;
}

}  // namespace cultprobe
