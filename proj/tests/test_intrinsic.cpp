#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cultprobe/error.hpp"
#include "cultprobe/intrinsic_metrics.hpp"
#include "test_support.hpp"

using namespace cultprobe;
using testsupport::basis;
using testsupport::StoreBuilder;

namespace {

// A unit vector at the given cosine to e0, in the (e0, e_other) plane.
std::vector<float> at_cosine(std::size_t dim, double c, std::size_t other) {
    std::vector<float> v(dim, 0.0f);
    v[0] = static_cast<float>(c);
    v[other] = static_cast<float>(std::sqrt(1.0 - c * c));
    return v;
}

std::vector<SetKey> image_keys(const std::string& lang, int n, const std::string& cc = "c") {
    std::vector<SetKey> keys;
    for (int i = 0; i < n; ++i) keys.push_back(SetKey::image("m", cc, "p", lang, i));
    return keys;
}

}  // namespace

TEST_CASE("national association") {
    StoreBuilder b(4);
    b.add(SetKey::text_baseline("n0"), basis(4, 0)).add(SetKey::text_baseline("n1"), basis(4, 1)).add(SetKey::text_baseline("n2"), basis(4, 2));
    b.add(SetKey::image("m", "c", "p", "EN", 0), basis(4, 1));
    b.add(SetKey::image("m", "c", "p", "ES", 0), basis(4, 3));
    const auto s = b.build();
    const std::vector<SetKey> nat{SetKey::text_baseline("n0"), SetKey::text_baseline("n1"), SetKey::text_baseline("n2")};
    const std::vector<std::string> names{"A", "B", "C"};
    const auto d = national_association(image_keys("EN", 1), nat, names, s);
    CHECK(d.argmax() == 1);
    const auto u = national_association(image_keys("ES", 1), nat, names, s);
    for (double p : u.probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(national_association({}, nat, names, s), Error);

    // k = 2 with cosines (0.8, 0.2)
    StoreBuilder k2(3);
    const std::vector<float> img{0.8f, 0.2f, static_cast<float>(std::sqrt(1.0 - 0.64 - 0.04))};
    k2.add(SetKey::text_baseline("x"), basis(3, 0)).add(SetKey::text_baseline("y"), basis(3, 1)).add(SetKey::image("m", "c", "p", "EN", 0), img);
    const auto s2 = k2.build();
    const std::vector<SetKey> xy{SetKey::text_baseline("x"), SetKey::text_baseline("y")};
    const std::vector<std::string> two{"X", "Y"};
    const auto p = national_association(image_keys("EN", 1), xy, two, s2);
    const double oracle = std::exp(0.8) / (std::exp(0.8) + std::exp(0.2));
    CHECK(std::abs(p.probs[0] - oracle) < 1e-4);
    CHECK(std::abs(p.probs[0] - 0.64566) < 1e-4);
}

TEST_CASE("NA distributions sum to one on random stores") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        StoreBuilder b(10);
        std::vector<SetKey> nat;
        std::vector<std::string> names;
        const int k = 2 + static_cast<int>(rng.uniform_index(8));
        for (int i = 0; i < k; ++i) {
            nat.push_back(SetKey::text_baseline("n" + std::to_string(i)));
            names.push_back("N" + std::to_string(i));
            b.add(nat.back(), testsupport::random_unit(rng, 10));
        }
        const int n = 1 + static_cast<int>(rng.uniform_index(6));
        for (int i = 0; i < n; ++i) b.add(SetKey::image("m", "c", "p", "EN", i), testsupport::random_unit(rng, 10));
        const auto d = national_association(image_keys("EN", n), nat, names, b.build());
        CHECK(std::abs(std::accumulate(d.probs.begin(), d.probs.end(), 0.0) - 1.0) < 1e-6);
    }
}

TEST_CASE("confusion accuracy") {
    Matrix id(4, 4);
    for (std::size_t i = 0; i < 4; ++i) id(i, i) = 1.0;
    CHECK(confusion_accuracy(id).accuracy == 1.0);

    // Every permutation matrix of size 4: accuracy = fixed points / 4.
    std::vector<std::size_t> perm{0, 1, 2, 3};
    int count = 0;
    do {
        Matrix m(4, 4);
        std::size_t fixed = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            m(i, perm[i]) = 1.0;
            fixed += perm[i] == i;
        }
        CHECK(confusion_accuracy(m).accuracy == static_cast<double>(fixed) / 4.0);
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(count == 24);

    // 8 of 10 diagonal argmaxes.
    Matrix ten(10, 10, 0.05);
    for (std::size_t i = 0; i < 10; ++i) ten(i, i < 8 ? i : (i + 1) % 10) = 0.55;
    CHECK(confusion_accuracy(ten).accuracy == doctest::Approx(0.8));

    // Random stochastic 5x5 against a row scan.
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        Matrix m(5, 5);
        for (auto& x : m.values()) x = rng.uniform01();
        std::size_t hits = 0;
        for (std::size_t r = 0; r < 5; ++r) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < 5; ++c) {
                if (m(r, c) > m(r, best)) best = c;
            }
            hits += best == r;
        }
        CHECK(confusion_accuracy(m).accuracy == static_cast<double>(hits) / 5.0);
    }

    Matrix tie(2, 2, 0.5);
    const auto r = confusion_accuracy(tie);
    CHECK(r.tied_rows == 2);
    CHECK(r.argmax == std::vector<std::size_t>{0, 0});
    CHECK(r.accuracy == 0.5);
    CHECK_THROWS_AS(confusion_accuracy(Matrix(2, 3)), Error);
}

TEST_CASE("dimension projection and cultural distance") {
    StoreBuilder b(3);
    b.add(SetKey::text_baseline("dim"), basis(3, 0));
    b.add(SetKey::image("m", "c", "p", "EN", 0), basis(3, 0)).add(SetKey::image("m", "c", "p", "EN", 1), basis(3, 0));
    b.add(SetKey::image("m", "c", "p", "ES", 0), basis(3, 1)).add(SetKey::image("m", "c", "p", "ES", 1), basis(3, 2));
    b.add(SetKey::image("m", "c", "p", "HI", 0), at_cosine(3, 0.3, 1)).add(SetKey::image("m", "c", "p", "HI", 1), at_cosine(3, 0.5, 2));
    const auto s = b.build();
    const auto dim = SetKey::text_baseline("dim");
    CHECK(dimension_projection(image_keys("EN", 2), dim, s) == 1.0);
    CHECK(dimension_projection(image_keys("ES", 2), dim, s) == 0.0);
    CHECK(dimension_projection(image_keys("HI", 2), dim, s) == doctest::Approx(0.4).epsilon(1e-7));

    StoreBuilder c(3);
    c.add(SetKey::text_baseline("a photo of c"), basis(3, 0));
    c.add(SetKey::image("m", "c", "p", "EN", 0), basis(3, 0)).add(SetKey::image("m", "c", "p", "EN", 1), basis(3, 0));
    c.add(SetKey::image("m", "c", "p", "ES", 0), basis(3, 1)).add(SetKey::image("m", "c", "p", "ES", 1), basis(3, 2));
    c.add(SetKey::image("m", "c", "p", "HI", 0), at_cosine(3, 0.3, 1)).add(SetKey::image("m", "c", "p", "HI", 1), at_cosine(3, 0.5, 2));
    const auto sc = c.build();
    const auto r = SetKey::text_baseline("a photo of c");
    CHECK(cultural_distance(image_keys("EN", 2), r, sc) == 0.0);
    CHECK(cultural_distance(image_keys("ES", 2), r, sc) == 100.0);
    CHECK(cultural_distance(image_keys("HI", 2), r, sc) == doctest::Approx(60.0).epsilon(1e-6));
    CHECK_THROWS_AS(cultural_distance(std::vector<SetKey>{SetKey::image("m", "c", "p", "EN", 0), SetKey::image("m", "d", "p", "EN", 0)}, r, sc), Error);
}

TEST_CASE("culture map axes") {
    std::map<std::string, std::map<std::string, DimensionScorePair>> scores;
    const AxisSpec x{"xdim", false}, y{"ydim", false};
    scores["EN"]["xdim"] = {"xdim", 0.6, 0.2};
    scores["EN"]["ydim"] = {"ydim", 0.5, 0.5};
    scores["ES"]["xdim"] = {"xdim", 0.4, 0.3};
    scores["ES"]["ydim"] = {"ydim", 0.3, 0.3};
    scores["FR"]["xdim"] = {"xdim", 0.5, 0.2};
    scores["FR"]["ydim"] = {"ydim", 0.2, 0.2};
    const auto map = culture_map_axes(scores, x, y, {{"ES", "latin"}, {"FR", "latin"}});
    REQUIRE(map.points.size() == 3);
    CHECK(map.points[0].x == doctest::Approx(0.4));
    CHECK(map.points[0].y == 0.0);
    const auto latin = std::find_if(map.groups.begin(), map.groups.end(), [](const auto& g) { return g.group == "latin"; });
    REQUIRE(latin != map.groups.end());
    CHECK(latin->mean_x == doctest::Approx(0.2));
    CHECK(latin->std_x == doctest::Approx(0.1));

    // Equal poles land on the origin.
    std::map<std::string, std::map<std::string, DimensionScorePair>> flat;
    flat["EN"]["xdim"] = {"xdim", 0.3, 0.3};
    flat["EN"]["ydim"] = {"ydim", 0.7, 0.7};
    const auto origin = culture_map_axes(flat, x, y, {});
    CHECK(origin.points[0].x == 0.0);
    CHECK(origin.points[0].y == 0.0);

    flat["ES"]["xdim"] = {"xdim", 0.3, 0.3};
    CHECK_THROWS_AS(culture_map_axes(flat, x, y, {}), Error);

    // The defaults subtract the first-named pole from the second.
    const auto dy = default_y_axis();
    const auto dx = default_x_axis();
    std::map<std::string, std::map<std::string, DimensionScorePair>> wvs;
    wvs["EN"][dy.dimension_id] = {dy.dimension_id, 0.2, 0.5};  // traditional, rational
    wvs["EN"][dx.dimension_id] = {dx.dimension_id, 0.1, 0.4};  // survival, self-expression
    const auto m = culture_map_axes(wvs, dx, dy, default_language_groups());
    CHECK(m.points[0].y == doctest::Approx(0.3));
    CHECK(m.points[0].x == doctest::Approx(0.3));
}

TEST_CASE("cross-cultural similarity") {
    StoreBuilder b(3);
    b.add(SetKey::image("m", "c", "p", "EN", 0), basis(3, 0)).add(SetKey::image("m", "c", "p", "EN", 1), basis(3, 0));
    b.add(SetKey::visual("v", "c", "p", "EN", 0), basis(3, 0)).add(SetKey::visual("v", "c", "p", "EN", 1), basis(3, 1));
    b.add(SetKey::visual("v", "c", "p", "ES", 0), basis(3, 2));
    b.add(SetKey::image("m", "d", "p", "ES", 0), basis(3, 2));
    const auto s = b.build();
    const auto en = image_keys("EN", 2);
    CHECK(cross_cultural_similarity(en, en, s) == 1.0);
    const std::vector<SetKey> v_en{SetKey::visual("v", "c", "p", "EN", 0), SetKey::visual("v", "c", "p", "EN", 1)};
    const std::vector<SetKey> v_es{SetKey::visual("v", "c", "p", "ES", 0)};
    CHECK(cross_cultural_similarity(en, v_es, s) == 0.0);
    CHECK(cross_cultural_similarity(image_keys("EN", 1), v_en, s) == 0.5);
    CHECK_THROWS_AS(cross_cultural_similarity(std::vector<SetKey>{}, v_en, s), Error);
    CHECK_THROWS_AS(cross_cultural_similarity(image_keys("ES", 1, "d"), v_en, s), Error);

    Rng rng(8);
    StoreBuilder r(6);
    for (int i = 0; i < 5; ++i) r.add(SetKey::image("m", "c", "p", "EN", i), testsupport::random_unit(rng, 6));
    for (int i = 0; i < 3; ++i) r.add(SetKey::image("m", "c", "p", "ES", i), testsupport::random_unit(rng, 6));
    const auto rs = r.build();
    CHECK(cross_cultural_similarity(image_keys("EN", 5), image_keys("ES", 3), rs) ==
          doctest::Approx(cross_cultural_similarity(image_keys("ES", 3), image_keys("EN", 5), rs)).epsilon(1e-12));
}

TEST_CASE("normalize_matrix") {
    const auto a = normalize_matrix(std::vector<double>{2, 4, 6});
    CHECK(a.values == std::vector<double>{0, 0.5, 1});
    CHECK(a.min == 2);
    CHECK(a.max == 6);
    const auto d = normalize_matrix(std::vector<double>{5, 5, 5});
    CHECK(d.degenerate);
    CHECK(d.values == std::vector<double>{5, 5, 5});
    CHECK(normalize_matrix(std::vector<double>{0, 1}).values == std::vector<double>{0, 1});
    const auto cov = normalize_matrix(std::vector<double>{0.5, 0.4, 0.3, 0.2, 0.1});
    const std::vector<double> expect{1, 0.75, 0.5, 0.25, 0};
    for (std::size_t i = 0; i < 5; ++i) CHECK(cov.values[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK_THROWS_AS(normalize_matrix(std::vector<double>{1, NAN}), Error);
    CHECK_THROWS_AS(normalize_matrix(std::vector<double>{}), Error);
}

TEST_CASE("CCS matrix") {
    StoreBuilder b(4);
    for (const std::string l : {"EN", "ES"}) {
        for (int i = 0; i < 2; ++i) {
            b.add(SetKey::image("m", "c", "p", l, i), basis(4, 0));
            b.add(SetKey::visual("v", "c", "p", l, i), basis(4, 0));
        }
    }
    const auto s = b.build();
    const auto img = s.sets(EmbeddingRole::Image);
    const auto vis = s.sets(EmbeddingRole::VisualBaseline);
    std::vector<kernels::ConceptSets> images{{{"c", img.at({"m", "c", "p", "EN"})}}, {{"c", img.at({"m", "c", "p", "ES"})}}};
    std::vector<kernels::ConceptSets> base{{{"c", vis.at({"v", "c", "p", "EN"})}}, {{"c", vis.at({"v", "c", "p", "ES"})}}};
    const auto m = build_ccs_matrix({"EN", "ES"}, images, base, s);
    CHECK(m.normalization.degenerate);
    for (double v : m.raw.values()) CHECK(v == 1.0);
    CHECK(m.normalized == m.raw);
    CHECK_THROWS_AS(build_ccs_matrix({"EN"}, std::span(images).first(1), std::span(base).first(1), s), Error);

    const auto n = normalize_matrix(std::vector<double>{0.9, 0.3, 0.3, 0.9});
    CHECK(n.values == std::vector<double>{1, 0, 0, 1});
}

TEST_CASE("CCS matrix matches the pairwise oracle on a 3-language fixture") {
    Rng rng(31);
    const std::vector<std::string> langs{"EN", "ES", "HI"};
    const std::vector<std::string> concepts{"a", "b", "c"};
    StoreBuilder b(5);
    std::map<std::pair<std::string, std::string>, std::vector<std::vector<float>>> img, vis;
    for (const auto& l : langs) {
        for (const auto& c : concepts) {
            for (int i = 0; i < 3; ++i) {
                img[{l, c}].push_back(testsupport::random_unit(rng, 5));
                b.add(SetKey::image("m", c, "p", l, i), img[{l, c}].back());
            }
            // HI has no baseline photos of concept b.
            if (l == "HI" && c == "b") continue;
            for (int i = 0; i < 2; ++i) {
                vis[{l, c}].push_back(testsupport::random_unit(rng, 5));
                b.add(SetKey::visual("v", c, "p", l, i), vis[{l, c}].back());
            }
        }
    }
    const auto s = b.build();
    std::vector<kernels::ConceptSets> images(3), base(3);
    const auto is = s.sets(EmbeddingRole::Image);
    const auto vs = s.sets(EmbeddingRole::VisualBaseline);
    for (std::size_t li = 0; li < 3; ++li) {
        for (const auto& c : concepts) {
            images[li][c] = is.at({"m", c, "p", langs[li]});
            if (vs.count({"v", c, "p", langs[li]})) base[li][c] = vs.at({"v", c, "p", langs[li]});
        }
    }
    const auto m = build_ccs_matrix(langs, images, base, s);
    const auto dot = [](const std::vector<float>& x, const std::vector<float>& y) {
        double d = 0, a = 0, c = 0;
        for (std::size_t i = 0; i < x.size(); ++i) d += double(x[i]) * y[i], a += double(x[i]) * x[i], c += double(y[i]) * y[i];
        return d / std::sqrt(a * c);
    };
    std::vector<double> raw;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double sum = 0;
            int used = 0;
            for (const auto& c : concepts) {
                if (!vis.count({langs[j], c})) continue;
                double pair = 0;
                for (const auto& x : img[{langs[i], c}]) {
                    for (const auto& y : vis[{langs[j], c}]) pair += dot(x, y);
                }
                sum += pair / double(img[{langs[i], c}].size() * vis[{langs[j], c}].size());
                ++used;
            }
            raw.push_back(sum / used);
            CHECK(std::abs(m.raw(i, j) - raw.back()) < 1e-9);
            CHECK(m.symmetrized(i, j) == doctest::Approx((m.raw(i, j) + m.raw(j, i)) / 2).epsilon(1e-15));
        }
    }
    CHECK(m.skips.size() == 3);
    const double lo = *std::min_element(raw.begin(), raw.end()), hi = *std::max_element(raw.begin(), raw.end());
    const auto n = normalize_matrix(m.raw.values());
    for (std::size_t k = 0; k < 9; ++k) CHECK(m.normalized.values()[k] == n.values[k]);
    CHECK(std::abs(n.min - lo) < 1e-9);
    CHECK(std::abs(n.max - hi) < 1e-9);
}

TEST_CASE("conceptual coverage") {
    StoreBuilder b(3);
    b.add(SetKey::text_baseline("food"), basis(3, 0));
    std::vector<SetKey> same, spread;
    for (int i = 0; i < 2; ++i) {
        same.push_back(SetKey::description("m", "food", "p", "EN", i, "food " + std::to_string(i)));
        b.add(same.back(), basis(3, 0));
    }
    const double cs[] = {0.2, 0.6, 0.4, 0.8};
    for (int i = 0; i < 4; ++i) {
        spread.push_back(SetKey::description("m", "food", "p", "ES", i, "x" + std::to_string(i)));
        b.add(spread.back(), at_cosine(3, cs[i], 1 + i % 2));
    }
    const auto s = b.build();
    CHECK(conceptual_coverage(same, SetKey::text_baseline("food"), s) == 1.0);
    CHECK(conceptual_coverage(spread, SetKey::text_baseline("food"), s) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK_THROWS_AS(conceptual_coverage(std::vector<SetKey>{}, SetKey::text_baseline("food"), s), Error);
}
