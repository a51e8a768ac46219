// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures, so ctest reports the run as failed when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "cultprobe/extrinsic.hpp"
#include "cultprobe/human_eval.hpp"
#include "cultprobe/intrinsic_metrics.hpp"
#include "cultprobe/kernels.hpp"
#include "cultprobe/pipeline.hpp"
#include "cultprobe/prompt_engine.hpp"
#include "cultprobe/prompt_optimizer.hpp"
#include "test_support.hpp"

using namespace cultprobe;
namespace fs = std::filesystem;
using testsupport::basis;
using testsupport::StoreBuilder;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

const Registry& reg() { return Registry::bundled(); }

double dotd(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<SetKey> image_keys(const std::string& lang, int n, const std::string& cc = "c") {
    std::vector<SetKey> keys;
    for (int i = 0; i < n; ++i) keys.push_back(SetKey::image("m", cc, "p", lang, i));
    return keys;
}

Outcome prompt_rendering() {
    Outcome o;
    const auto& food = reg().concept_by_id("food");
    const auto& ru = reg().language("RU");
    const auto& en = reg().language("EN");
    o.require(render_prompt(TemplateKind::EnglishReference, food, en, reg()).text == "a photo of food", "english reference");
    o.require(render_prompt(TemplateKind::FullyTranslated, food, ru, reg()).text == "фото еда", "fully translated");
    o.require(render_prompt(TemplateKind::TranslatedConcept, food, ru, reg()).text == "a photo of еда", "translated concept");
    o.require(render_prompt(TemplateKind::EnglishWithNation, food, ru, reg()).text == "a photo of Russian food", "english with nation");
    const auto gib = render_prompt(TemplateKind::EnglishWithGibberish, food, ru, reg(), GibberishSpec{10, 42});
    o.require(gib.text.rfind("a photo of food ", 0) == 0, "gibberish prefix");
    const std::string term = gib.text.substr(16);
    o.require(utf8_length(term) == 10 && ru.in_alphabet(term), "gibberish term");
    return o;
}

Outcome dataset_enumeration() {
    Outcome o;
    const auto cfg = read_model_config(testsupport::fixtures() / "model_sd.json", reg());
    const auto m = enumerate_dataset(cfg, reg());
    o.require(m.entries.size() == 10500, "entries = " + std::to_string(m.entries.size()));
    o.require(std::all_of(m.entries.begin(), m.entries.end(), [](const auto& e) { return e.base_seed == 42; }), "seed 42");
    return o;
}

Outcome na_math() {
    Outcome o;
    Rng rng(1);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> s(2 + rng.uniform_index(20));
        for (double& x : s) x = 2.0 * rng.uniform01() - 1.0;
        const auto p = kernels::softmax(s);
        o.require(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-6, "softmax sum");
        const double shift = 10.0 * rng.uniform01() - 5.0;
        auto shifted = s;
        for (double& x : shifted) x += shift;
        const auto q = kernels::softmax(shifted);
        for (std::size_t i = 0; i < p.size(); ++i) o.require(std::abs(p[i] - q[i]) < 1e-9, "shift invariance");
        o.require(std::max_element(p.begin(), p.end()) - p.begin() == std::max_element(q.begin(), q.end()) - q.begin(), "argmax shift");
    }
    StoreBuilder k2(3);
    const std::vector<float> img{0.8f, 0.2f, static_cast<float>(std::sqrt(1.0 - 0.64 - 0.04))};
    k2.add(SetKey::text_baseline("x"), basis(3, 0)).add(SetKey::text_baseline("y"), basis(3, 1)).add(SetKey::image("m", "c", "p", "EN", 0), img);
    const auto s2 = k2.build();
    const std::vector<SetKey> xy{SetKey::text_baseline("x"), SetKey::text_baseline("y")};
    const auto d = national_association(image_keys("EN", 1), xy, std::vector<std::string>{"X", "Y"}, s2);
    const double oracle = std::exp(0.8) / (std::exp(0.8) + std::exp(0.2));
    o.require(std::abs(d.probs[0] - oracle) < 1e-4, "k=2 case");
    return o;
}

Outcome accuracy() {
    Outcome o;
    Matrix id(4, 4);
    for (std::size_t i = 0; i < 4; ++i) id(i, i) = 1.0;
    o.require(confusion_accuracy(id).accuracy == 1.0, "identity");
    std::vector<std::size_t> perm{0, 1, 2, 3};
    int count = 0;
    do {
        Matrix m(4, 4);
        std::size_t fixed = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            m(i, perm[i]) = 1.0;
            fixed += perm[i] == i;
        }
        o.require(confusion_accuracy(m).accuracy == static_cast<double>(fixed) / 4.0, "permutation");
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    o.require(count == 24, "24 permutations");
    Matrix ten(10, 10, 0.05);
    for (std::size_t i = 0; i < 10; ++i) ten(i, i < 8 ? i : (i + 1) % 10) = 0.55;
    o.require(confusion_accuracy(ten).accuracy == 0.8, "8 of 10");
    return o;
}

Outcome xdp() {
    Outcome o;
    const auto s = xdp_from_counts(reg().dimension("modern_ancient"), 6, 3, 1);
    o.require(s.value == 0.3, "value = " + std::to_string(s.value));
    return o;
}

Outcome majority() {
    Outcome o;
    const auto nat = AliasTable::nationalities(reg());
    const std::vector<std::string> tie{"Russia", "Russia", "France", "France"};
    o.require(majority_vote(tie, nat).label == kCantTell, "2-2 tie");
    std::vector<std::string> three{"Russia", "France", "Russia", "Russia"};
    o.require(majority_vote(three, nat).label == "Russian", "3-1");
    const std::vector<std::string> pool{"Russia", "France", "Spain", "no idea", "Greek", "India"};
    Rng rng(4);
    std::vector<std::string> answers;
    for (int i = 0; i < 7; ++i) answers.push_back(pool[rng.uniform_index(pool.size())]);
    const auto base = majority_vote(answers, nat);
    for (int s = 0; s < 1000; ++s) {
        for (std::size_t i = answers.size() - 1; i > 0; --i) std::swap(answers[i], answers[rng.uniform_index(i + 1)]);
        const auto v = majority_vote(answers, nat);
        o.require(v.label == base.label && v.counts == base.counts, "shuffle " + std::to_string(s));
        auto t = three;
        std::shuffle(t.begin(), t.end(), std::mt19937_64(static_cast<std::uint64_t>(s)));
        o.require(majority_vote(t, nat).label == "Russian", "3-1 shuffled");
    }
    return o;
}

Outcome xna_fixture() {
    Outcome o;
    const auto f = read_answers(testsupport::fixtures() / "answers_xna.jsonl", &reg());
    const auto r = xna_report(f.answers, reg(), NationalityOrder::Primary);
    const double hi = r.model_means.at({"blip2", "HI"});
    o.require(std::abs(hi - 0.693) <= 0.001, "HI mean = " + std::to_string(hi));
    return o;
}

Outcome cd_ccs() {
    Outcome o;
    StoreBuilder b(4);
    b.add(SetKey::text_baseline("a photo of c"), basis(4, 2));
    for (const std::string l : {"EN", "ES"}) {
        for (int i = 0; i < 2; ++i) {
            b.add(SetKey::image("m", "c", "p", l, i), basis(4, 2));
            b.add(SetKey::visual("v", "c", "p", l, i), basis(4, 2));
        }
    }
    const auto s = b.build();
    o.require(cultural_distance(image_keys("EN", 2), SetKey::text_baseline("a photo of c"), s) == 0.0, "CD identical");
    const std::vector<SetKey> v_es{SetKey::visual("v", "c", "p", "ES", 0), SetKey::visual("v", "c", "p", "ES", 1)};
    o.require(cross_cultural_similarity(image_keys("EN", 2), v_es, s) == 1.0, "CCS identical");

    // Three languages, three concepts, one missing baseline set.
    Rng rng(31);
    const std::vector<std::string> langs{"EN", "ES", "HI"};
    const std::vector<std::string> concepts{"a", "b", "c"};
    StoreBuilder h(5);
    std::map<std::pair<std::string, std::string>, std::vector<std::vector<float>>> img, vis;
    for (const auto& l : langs) {
        for (const auto& c : concepts) {
            for (int i = 0; i < 3; ++i) {
                img[{l, c}].push_back(testsupport::random_unit(rng, 5));
                h.add(SetKey::image("m", c, "p", l, i), img[{l, c}].back());
            }
            if (l == "HI" && c == "b") continue;
            for (int i = 0; i < 2; ++i) {
                vis[{l, c}].push_back(testsupport::random_unit(rng, 5));
                h.add(SetKey::visual("v", c, "p", l, i), vis[{l, c}].back());
            }
        }
    }
    const auto hs = h.build();
    std::vector<kernels::ConceptSets> images(3), base(3);
    const auto is = hs.sets(EmbeddingRole::Image);
    const auto vs = hs.sets(EmbeddingRole::VisualBaseline);
    for (std::size_t li = 0; li < 3; ++li) {
        for (const auto& c : concepts) {
            images[li][c] = is.at({"m", c, "p", langs[li]});
            if (vs.count({"v", c, "p", langs[li]})) base[li][c] = vs.at({"v", c, "p", langs[li]});
        }
    }
    const auto m = build_ccs_matrix(langs, images, base, hs);
    const auto cos = [](const std::vector<float>& x, const std::vector<float>& y) {
        double d = 0, a = 0, c = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            d += double(x[i]) * y[i];
            a += double(x[i]) * x[i];
            c += double(y[i]) * y[i];
        }
        return d / std::sqrt(a * c);
    };
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double sum = 0;
            int used = 0;
            for (const auto& c : concepts) {
                if (!vis.count({langs[j], c})) continue;
                double pair = 0;
                for (const auto& x : img[{langs[i], c}]) {
                    for (const auto& y : vis[{langs[j], c}]) pair += cos(x, y);
                }
                sum += pair / double(img[{langs[i], c}].size() * vis[{langs[j], c}].size());
                ++used;
            }
            o.require(std::abs(m.raw(i, j) - sum / used) < 1e-9, "pairwise oracle");
        }
    }
    // Min-max against the affine map written out directly.
    const std::vector<double> v{0.25, 0.75, 0.5, 1.25, 0.25};
    const auto n = normalize_matrix(v);
    for (std::size_t k = 0; k < v.size(); ++k) o.require(n.values[k] == (v[k] - 0.25) / (1.25 - 0.25), "affine oracle");
    return o;
}

double kappa_oracle(const std::vector<std::vector<std::size_t>>& counts) {
    const double N = static_cast<double>(counts.size());
    double m = 0;
    for (auto c : counts[0]) m += static_cast<double>(c);
    double p_bar = 0;
    for (const auto& row : counts) {
        double sq = 0;
        for (auto c : row) sq += static_cast<double>(c) * static_cast<double>(c);
        p_bar += (sq - m) / (m * (m - 1));
    }
    p_bar /= N;
    double pe = 0;
    for (std::size_t j = 0; j < counts[0].size(); ++j) {
        double col = 0;
        for (const auto& row : counts) col += static_cast<double>(row[j]);
        pe += (col / (N * m)) * (col / (N * m));
    }
    return (p_bar - pe) / (1 - pe);
}

Outcome kappa() {
    Outcome o;
    const auto cats = [](std::size_t k) {
        std::vector<std::string> out;
        for (std::size_t j = 0; j < k; ++j) out.push_back("c" + std::to_string(j));
        return out;
    };
    std::vector<std::vector<std::size_t>> perfect;
    for (int i = 0; i < 10; ++i) perfect.push_back(i % 2 ? std::vector<std::size_t>{3, 0} : std::vector<std::size_t>{0, 3});
    o.require(fleiss_kappa(make_annotation_table(cats(2), perfect)).kappa == 1.0, "perfect agreement");
    Rng rng(99);
    int checked = 0;
    while (checked < 50) {
        const std::size_t items = 3 + rng.uniform_index(8), m = 2 + rng.uniform_index(4), k = 2 + rng.uniform_index(3);
        std::vector<std::vector<std::size_t>> counts(items, std::vector<std::size_t>(k, 0));
        for (auto& row : counts) {
            for (std::size_t a = 0; a < m; ++a) ++row[rng.uniform_index(k)];
        }
        const auto r = fleiss_kappa(make_annotation_table(cats(k), counts));
        if (r.degenerate) continue;
        ++checked;
        o.require(std::abs(r.kappa - kappa_oracle(counts)) < 1e-9, "oracle");
        for (std::size_t shift = 1; shift < k; ++shift) {
            auto permuted = counts;
            for (std::size_t i = 0; i < items; ++i) {
                for (std::size_t j = 0; j < k; ++j) permuted[i][(j + shift) % k] = counts[i][j];
            }
            o.require(fleiss_kappa(make_annotation_table(cats(k), permuted)).kappa == r.kappa, "permutation invariance");
        }
    }
    return o;
}

Outcome optimizer() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();

    Rng rng(31);
    ToyEncoder enc(8, 12, 3);
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        Matrix rows(1 + rng.uniform_index(4), 8);
        for (double& x : rows.values()) x = rng.normal() * 0.5;
        std::vector<double> up(12);
        for (double& x : up) x = rng.normal();
        const Matrix g = enc.gradient_rows(rows, up);
        for (std::size_t r = 0; r < rows.rows(); ++r) {
            for (std::size_t c = 0; c < 8; ++c) {
                Matrix plus = rows, minus = rows;
                plus(r, c) += 1e-5;
                minus(r, c) -= 1e-5;
                const double fd = (dotd(enc.embed_rows(plus), up) - dotd(enc.embed_rows(minus), up)) / 2e-5;
                worst = std::max(worst, std::abs(fd - g(r, c)) / std::max(1e-3, std::abs(fd) + std::abs(g(r, c))));
            }
        }
    }
    o.require(worst < 1e-4, "finite differences");

    // Known 1-token target, T=1.
    const auto vocab = toy_vocabulary(reg(), 16, 7);
    const auto en = filter_vocab(vocab, reg().language("EN"));
    ToyEncoder toy(16, 32, 7);
    const std::vector<int> target{en.tokens[en.find("q")].id};
    const auto obj = make_objective(ObjectiveKind::Textual, toy.embed_rows(token_rows(en, target)));
    OptimizationConfig one;
    const auto rec = optimize(obj, toy, en, one);
    o.require(rec.token_ids == target && -rec.final_loss >= 0.99, "known-target recovery");

    // T=2 over 3 tokens against exhaustive enumeration.
    Rng inst(7);
    std::vector<Token> tokens{{0, "a"}, {1, "b"}, {2, "c"}};
    Matrix rows(3, 16);
    for (double& x : rows.values()) x = inst.normal() * 0.25;
    const auto tiny = make_vocabulary(tokens, rows);
    std::vector<double> ov(32);
    for (double& x : ov) x = inst.normal();
    const auto tobj = make_objective(ObjectiveKind::Textual, ov);
    double best = 2;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            const std::vector<int> ids{a, b};
            best = std::min(best, -dotd(toy.embed_rows(token_rows(tiny, ids)), tobj.vector));
        }
    }
    int matched = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        OptimizationConfig cfg;
        cfg.T = 2;
        cfg.rng_seed = seed;
        const auto r = optimize(tobj, toy, tiny, cfg);
        o.require(r.final_loss >= best - 1e-12, "brute-force bound violated");
        matched += r.final_loss <= best + 1e-12;
    }
    o.require(matched >= 8, "optimum matched on " + std::to_string(matched) + "/10 seeds");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs < 60.0, "took " + std::to_string(secs) + " s");
    if (o.ok) o.detail = "matched " + std::to_string(matched) + "/10";
    return o;
}

Outcome determinism() {
    Outcome o;
    std::vector<std::map<std::string, std::string>> trees;
    for (const char* name : {"accept_a", "accept_b"}) {
        const auto out = testsupport::scratch_dir(name) / "out";
        auto j = nlohmann::json::parse(read_file(testsupport::fixtures() / "run.json"));
        j["output_dir"] = out.string();
        run(parse_run_config(j, testsupport::fixtures()));
        std::map<std::string, std::string> files;
        for (const auto& e : fs::recursive_directory_iterator(out)) {
            if (e.is_regular_file()) files[fs::relative(e.path(), out).string()] = read_file(e.path());
        }
        trees.push_back(std::move(files));
    }
    o.require(!trees[0].empty(), "no outputs");
    o.require(trees[0] == trees[1], "output trees differ");
    if (o.ok) o.detail = std::to_string(trees[0].size()) + " files identical";
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> check;
        double limit_seconds;
    };
    const std::vector<Criterion> criteria{
        {"prompt rendering", prompt_rendering, 1.0},
        {"dataset enumeration", dataset_enumeration, 0.0},
        {"NA math", na_math, 5.0},
        {"ACC", accuracy, 0.0},
        {"XDP", xdp, 0.0},
        {"majority vote", majority, 0.0},
        {"XNA fixture", xna_fixture, 0.0},
        {"CD/CCS", cd_ccs, 0.0},
        {"Fleiss kappa", kappa, 0.0},
        {"optimizer", optimizer, 60.0},
        {"determinism", determinism, 0.0},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_seconds > 0 && secs >= c.limit_seconds && o.ok) {
            o.ok = false;
            o.detail = "over time limit";
        }
        failures += !o.ok;
        std::printf("%s  %-20s %8.3f s  %s\n", o.ok ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures;
}
