// Serial reference vs OpenMP kernels on a synthetic store sized like one
// model's archive: 10 languages x 50 concepts x 4 images, 512-dim embeddings.

#include <benchmark/benchmark.h>

#include <cmath>
#include <string>
#include <vector>

#include "cultprobe/embedding_store.hpp"
#include "cultprobe/kernels.hpp"
#include "cultprobe/util.hpp"

using namespace cultprobe;

namespace {

constexpr std::size_t kDim = 512;
constexpr int kLangs = 10;
constexpr int kConcepts = 50;
constexpr int kImages = 4;
constexpr int kClasses = 20;

struct Fixture {
    EmbeddingStore store;
    std::vector<kernels::RowSet> sets;
    std::vector<std::size_t> classes;
    std::vector<std::size_t> targets;
    std::vector<kernels::ConceptSets> images;
    std::vector<kernels::ConceptSets> baselines;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Rng rng(2024);
        std::vector<SetKey> keys;
        std::vector<float> data;
        const auto push = [&](SetKey key) {
            keys.push_back(std::move(key));
            for (std::size_t i = 0; i < kDim; ++i) data.push_back(static_cast<float>(rng.normal()));
        };
        for (int c = 0; c < kClasses; ++c) push(SetKey::text_baseline("class " + std::to_string(c)));
        const std::string langs[kLangs] = {"AR", "DE", "EL", "EN", "ES", "FR", "HI", "JA", "RU", "ZH"};
        for (const auto& l : langs) {
            for (int c = 0; c < kConcepts; ++c) {
                for (int i = 0; i < kImages; ++i) push(SetKey::image("m", "c" + std::to_string(c), "p", l, i));
                for (int i = 0; i < kImages; ++i) push(SetKey::visual("v", "c" + std::to_string(c), "p", l, i));
            }
        }
        Fixture out{EmbeddingStore::from_rows(kDim, keys, data), {}, {}, {}, {}, {}};
        for (std::size_t c = 0; c < kClasses; ++c) out.classes.push_back(c);
        std::size_t row = kClasses;
        for (int l = 0; l < kLangs; ++l) {
            kernels::ConceptSets img, vis;
            for (int c = 0; c < kConcepts; ++c) {
                kernels::RowSet a, b;
                for (int i = 0; i < kImages; ++i) a.push_back(row++);
                for (int i = 0; i < kImages; ++i) b.push_back(row++);
                out.sets.push_back(a);
                out.targets.push_back(static_cast<std::size_t>(c % kClasses));
                img["c" + std::to_string(c)] = a;
                vis["c" + std::to_string(c)] = b;
            }
            out.images.push_back(std::move(img));
            out.baselines.push_back(std::move(vis));
        }
        return out;
    }();
    return f;
}

void BM_NaReference(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::na_distributions(f.store, f.sets, f.classes));
}
void BM_NaOpenMP(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(kernels::na_distributions(f.store, f.sets, f.classes));
}
void BM_MeanCosReference(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::mean_cosine_to_target(f.store, f.sets, f.targets));
}
void BM_MeanCosOpenMP(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(kernels::mean_cosine_to_target(f.store, f.sets, f.targets));
}
void BM_CcsReference(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::ccs_cells(f.store, f.images, f.baselines));
}
void BM_CcsOpenMP(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(kernels::ccs_cells(f.store, f.images, f.baselines));
}

}  // namespace

BENCHMARK(BM_NaReference);
BENCHMARK(BM_NaOpenMP);
BENCHMARK(BM_MeanCosReference);
BENCHMARK(BM_MeanCosOpenMP);
BENCHMARK(BM_CcsReference);
BENCHMARK(BM_CcsOpenMP);

BENCHMARK_MAIN();
