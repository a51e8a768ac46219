#include <doctest.h>

#include <set>

#include "cultprobe/error.hpp"
#include "cultprobe/prompt_engine.hpp"
#include "cultprobe/util.hpp"
#include "test_support.hpp"

using namespace cultprobe;

namespace {
const Registry& reg() { return Registry::bundled(); }
}  // namespace

TEST_CASE("template rows") {
    const auto& food = reg().concept_by_id("food");
    const auto& ru = reg().language("RU");
    const auto& en = reg().language("EN");
    CHECK(render_prompt(TemplateKind::EnglishReference, food, en, reg()).text == "a photo of food");
    CHECK(render_prompt(TemplateKind::FullyTranslated, food, ru, reg()).text == "фото еда");
    CHECK(render_prompt(TemplateKind::TranslatedConcept, food, ru, reg()).text == "a photo of еда");
    CHECK(render_prompt(TemplateKind::EnglishWithNation, food, ru, reg()).text == "a photo of Russian food");
    const auto gib = render_prompt(TemplateKind::EnglishWithGibberish, food, ru, reg(), GibberishSpec{10, 3});
    CHECK(gib.text.rfind("a photo of food ", 0) == 0);
    const std::string term = gib.text.substr(16);
    CHECK(utf8_length(term) == 10);
    CHECK(ru.in_alphabet(term));
    CHECK_THROWS_AS(render_prompt(TemplateKind::EnglishWithGibberish, food, ru, reg()), Error);
}

TEST_CASE("segments join to the text and respect language purity") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const auto& cc = reg().concepts()[rng.uniform_index(reg().concepts().size())];
        const auto& lang = reg().languages()[rng.uniform_index(reg().languages().size())];
        for (auto kind : kAllTemplateKinds) {
            const auto p = render_prompt(kind, cc, lang, reg(), GibberishSpec{5, 9});
            CHECK(p == render_prompt(kind, cc, lang, reg(), GibberishSpec{5, 9}));
            std::string joined;
            std::size_t foreign = 0, english = 0;
            for (const auto& s : p.segments) {
                joined += (joined.empty() ? "" : " ") + s.text;
                CHECK((s.language_code == "EN" || s.language_code == lang.code));
                (s.language_code == "EN" ? english : foreign)++;
            }
            CHECK(joined == p.text);
            if (lang.code == "EN") continue;
            if (kind == TemplateKind::EnglishReference) CHECK(foreign == 0);
            if (kind == TemplateKind::FullyTranslated) CHECK(english == 0);
            if (kind == TemplateKind::TranslatedConcept) CHECK(foreign == 1);
        }
    }
}

TEST_CASE("gibberish") {
    const auto& ru = reg().language("RU");
    const auto g = gen_gibberish(ru, 10, 11);
    CHECK(utf8_length(g) == 10);
    CHECK(ru.in_alphabet(g));
    CHECK(g == gen_gibberish(ru, 10, 11));
    const auto one = gen_gibberish(reg().language("EN"), 1, 4);
    CHECK(one.size() == 1);
    CHECK(one[0] >= 'a');
    CHECK(one[0] <= 'z');
    for (const auto& l : reg().languages()) {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const auto s = gen_gibberish(l, 1 + seed % 12, seed);
            CHECK(l.in_alphabet(s));
            CHECK(s.find(' ') == std::string::npos);
        }
    }
}

TEST_CASE("evaluation prompts") {
    CHECK(render_eval_prompt(EvalPromptKind::NationalStyle, {{"national", "spanish"}}) == "a photo with spanish style");
    CHECK(render_eval_prompt(EvalPromptKind::DimensionAspects, {{"dimension", "modernity"}}) == "a photo with modernity aspects");
    CHECK(render_eval_prompt(EvalPromptKind::XdpQuestion, {{"d0", "modern"}, {"d1", "ancient"}}) ==
          "Are there more modern features in the photo or more ancient?");
    CHECK(national_style_prompt("Spanish") == "a photo with spanish style");
    CHECK(xdp_question(reg().dimension("modern_ancient")) == "Are there more modern features in the photo or more ancient?");
    CHECK(dimension_aspect_prompt(reg().dimension("modern_ancient").pole_positive) == "a photo with modernity aspects");
    CHECK_THROWS_AS(render_eval_prompt(EvalPromptKind::NationalStyle, {}), Error);
    CHECK_THROWS_AS(render_eval_prompt(EvalPromptKind::XnaQuestion, {{"national", "x"}}), Error);
}

TEST_CASE("dataset enumeration") {
    ModelConfig small;
    small.model_id = "m";
    small.languages = {"EN", "RU"};
    small.template_kinds = {TemplateKind::EnglishReference, TemplateKind::FullyTranslated, TemplateKind::EnglishWithGibberish};
    small.concept_ids = {"food", "car", "train", "teacher"};
    const auto m = enumerate_dataset(small, reg());
    CHECK(m.entries.size() == 24);
    // (concept, template, language) lexicographic order
    for (std::size_t i = 1; i < m.entries.size(); ++i) {
        const auto& a = m.entries[i - 1];
        const auto& b = m.entries[i];
        CHECK(std::tuple(a.concept_id, std::string(to_string(a.template_kind)), a.language_code) <
              std::tuple(b.concept_id, std::string(to_string(b.template_kind)), b.language_code));
    }
    CHECK(manifest_from_jsonl(manifest_to_jsonl(m), reg()) == m);

    small.concept_ids.push_back("food");
    try {
        enumerate_dataset(small, reg());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("food") != std::string::npos);
    }
}

TEST_CASE("SD config gives 10,500 entries with seed 42") {
    const auto cfg = read_model_config(testsupport::fixtures() / "model_sd.json", reg());
    const auto m = enumerate_dataset(cfg, reg());
    CHECK(m.entries.size() == 10500);
    std::set<std::tuple<std::string, TemplateKind, std::string>> unique;
    for (const auto& e : m.entries) {
        CHECK(e.base_seed == 42);
        CHECK(e.images_per_set == 4);
        unique.emplace(e.concept_id, e.template_kind, e.language_code);
    }
    CHECK(unique.size() == 10500);
}

TEST_CASE("gibberish seeds differ per entry and are stable") {
    CHECK(gibberish_seed(42, "food", "RU") == gibberish_seed(42, "food", "RU"));
    CHECK(gibberish_seed(42, "food", "RU") != gibberish_seed(42, "food", "ES"));
    CHECK(gibberish_seed(42, "food", "RU") != gibberish_seed(43, "food", "RU"));
}
