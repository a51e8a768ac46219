#include <doctest.h>

#include <cstring>

#include "cultprobe/kernels.hpp"
#include "test_support.hpp"

using namespace cultprobe;

namespace {

bool same_bits(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && std::memcmp(a.values().data(), b.values().data(), a.values().size() * sizeof(double)) == 0;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct RandomCorpus {
    EmbeddingStore store;
    std::vector<kernels::RowSet> sets;
    std::vector<std::size_t> classes;
    std::vector<kernels::ConceptSets> images, baselines;
};

RandomCorpus corpus(std::uint64_t seed) {
    Rng rng(seed);
    testsupport::StoreBuilder b(24);
    const std::vector<std::string> langs{"EN", "ES", "HI", "ZH", "RU"};
    const std::vector<std::string> concepts{"a", "b", "c", "d", "e", "f"};
    for (const auto& l : langs) {
        for (const auto& c : concepts) {
            for (int k = 0; k < 4; ++k) b.add(SetKey::image("m", c, "p", l, k), testsupport::random_unit(rng, 24));
            for (int k = 0; k < 3; ++k) b.add(SetKey::visual("v", c, "p", l, k), testsupport::random_unit(rng, 24));
        }
    }
    for (int t = 0; t < 9; ++t) b.add(SetKey::text_baseline("t" + std::to_string(t)), testsupport::random_unit(rng, 24));
    RandomCorpus out;
    out.store = b.build();
    for (const auto& [g, rows] : out.store.sets(EmbeddingRole::Image)) out.sets.push_back(rows);
    for (int t = 0; t < 9; ++t) out.classes.push_back(out.store.text_row("t" + std::to_string(t)));
    const auto vis = out.store.sets(EmbeddingRole::VisualBaseline);
    const auto img = out.store.sets(EmbeddingRole::Image);
    for (const auto& l : langs) {
        kernels::ConceptSets i, v;
        for (const auto& c : concepts) {
            // Drop some concepts so cells have skips.
            if (!(l == "HI" && c == "b")) i[c] = img.at({"m", c, "p", l});
            if (!(l == "ZH" && c == "e")) v[c] = vis.at({"v", c, "p", l});
        }
        out.images.push_back(i);
        out.baselines.push_back(v);
    }
    return out;
}

}  // namespace

TEST_CASE("OpenMP kernels match the serial references bit for bit") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto c = corpus(seed);
        const auto rows = c.sets.front();
        std::vector<std::size_t> all(c.store.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        CHECK(same_bits(kernels::cosine_matrix(c.store, all, c.classes), kernels::reference::cosine_matrix(c.store, all, c.classes)));
        CHECK(same_bits(kernels::na_distributions(c.store, c.sets, c.classes), kernels::reference::na_distributions(c.store, c.sets, c.classes)));
        std::vector<std::size_t> targets;
        for (std::size_t s = 0; s < c.sets.size(); ++s) targets.push_back(c.classes[s % c.classes.size()]);
        CHECK(same_bits(kernels::mean_cosine_to_target(c.store, c.sets, targets), kernels::reference::mean_cosine_to_target(c.store, c.sets, targets)));
        const double a = kernels::mean_pairwise_cosine(c.store, all, c.classes);
        const double b = kernels::reference::mean_pairwise_cosine(c.store, all, c.classes);
        CHECK(std::memcmp(&a, &b, sizeof a) == 0);
        const auto x = kernels::ccs_cells(c.store, c.images, c.baselines);
        const auto y = kernels::reference::ccs_cells(c.store, c.images, c.baselines);
        REQUIRE(x.size() == y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            for (std::size_t j = 0; j < x[i].size(); ++j) {
                CHECK(std::memcmp(&x[i][j].value, &y[i][j].value, sizeof(double)) == 0);
                CHECK(x[i][j].concepts_used == y[i][j].concepts_used);
                CHECK(x[i][j].skipped_concepts == y[i][j].skipped_concepts);
            }
        }
    }
}

TEST_CASE("softmax") {
    const auto p = kernels::softmax(std::vector<double>{0.8, 0.2});
    CHECK(p[0] == doctest::Approx(0.64566).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.35434).epsilon(1e-4));
    const auto u = kernels::softmax(std::vector<double>{0.3, 0.3, 0.3, 0.3});
    for (double x : u) CHECK(x == doctest::Approx(0.25));
    // Large values do not overflow.
    const auto big = kernels::softmax(std::vector<double>{1000.0, 999.0});
    CHECK(big[0] + big[1] == doctest::Approx(1.0));
}

TEST_CASE("NA distributions over the image set") {
    testsupport::StoreBuilder b(3);
    b.add(SetKey::text_baseline("n1"), testsupport::basis(3, 0));
    b.add(SetKey::text_baseline("n2"), testsupport::basis(3, 1));
    b.add(SetKey::text_baseline("n3"), testsupport::basis(3, 2));
    b.add(SetKey::image("m", "c", "p", "EN", 0), testsupport::basis(3, 1));
    b.add(SetKey::image("m", "c", "p", "EN", 1), testsupport::basis(3, 1));
    const auto s = b.build();
    const std::vector<kernels::RowSet> sets{{3, 4}};
    const std::vector<std::size_t> classes{0, 1, 2};
    const auto d = kernels::na_distributions(s, sets, classes);
    CHECK(d(0, 1) > d(0, 0));
    CHECK(d(0, 1) > d(0, 2));
    CHECK(d(0, 0) + d(0, 1) + d(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
}
