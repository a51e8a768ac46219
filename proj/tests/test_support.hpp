#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "cultprobe/embedding_store.hpp"
#include "cultprobe/util.hpp"

namespace testsupport {

inline std::filesystem::path fixtures() { return CULTPROBE_FIXTURE_DIR; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("cultprobe_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::vector<float> basis(std::size_t dim, std::size_t i) {
    std::vector<float> v(dim, 0.0f);
    v[i] = 1.0f;
    return v;
}

inline std::vector<float> random_unit(cultprobe::Rng& rng, std::size_t dim) {
    std::vector<float> v(dim);
    double n = 0.0;
    for (auto& x : v) {
        x = static_cast<float>(rng.normal());
        n += static_cast<double>(x) * x;
    }
    for (auto& x : v) x = static_cast<float>(x / std::sqrt(n));
    return v;
}

struct StoreBuilder {
    std::size_t dim;
    std::vector<cultprobe::SetKey> keys;
    std::vector<float> data;

    explicit StoreBuilder(std::size_t d) : dim(d) {}
    StoreBuilder& add(cultprobe::SetKey key, const std::vector<float>& v) {
        keys.push_back(std::move(key));
        data.insert(data.end(), v.begin(), v.end());
        return *this;
    }
    cultprobe::EmbeddingStore build() const { return cultprobe::EmbeddingStore::from_rows(dim, keys, data); }
};

}  // namespace testsupport
