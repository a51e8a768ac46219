#include "cultprobe/prompt_engine.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include <json.hpp>

#include "cultprobe/error.hpp"
#include "cultprobe/util.hpp"

namespace cultprobe {

namespace {

constexpr std::string_view kPhotoOf = "a photo of";

std::string replace_placeholder(std::string text, std::string_view placeholder, std::string_view value) {
    const auto pos = text.find(placeholder);
    if (pos == std::string::npos) throw Error("template lacks placeholder " + std::string(placeholder));
    text.replace(pos, placeholder.size(), value);
    return text;
}

PromptInstance assemble(TemplateKind kind, const CulturalConcept& cc, const Language& language, std::vector<PromptSegment> segments) {
    PromptInstance p;
    p.kind = kind;
    p.concept_id = cc.id;
    p.language_code = language.code;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i > 0) p.text.push_back(' ');
        p.text += segments[i].text;
    }
    p.segments = std::move(segments);
    return p;
}

const std::string& require_translation(const CulturalConcept& cc, const Language& language) {
    const std::string* t = cc.translation(language.code);
    if (t == nullptr || t->empty())
        throw Error("missing " + language.code + " translation for concept '" + cc.id + "'");
    return *t;
}

}  // namespace

std::string_view to_string(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::EnglishReference: return "english_reference";
        case TemplateKind::FullyTranslated: return "fully_translated";
        case TemplateKind::TranslatedConcept: return "translated_concept";
        case TemplateKind::EnglishWithNation: return "english_with_nation";
        case TemplateKind::EnglishWithGibberish: return "english_with_gibberish";
    }
    return "unknown";
}

TemplateKind parse_template_kind(std::string_view slug) {
    for (TemplateKind k : kAllTemplateKinds) {
        if (to_string(k) == slug) return k;
    }
    throw Error("unknown prompt template '" + std::string(slug) + "'");
}

PromptInstance render_prompt(TemplateKind kind, const CulturalConcept& cc, const Language& language, const Registry& registry,
                             const std::optional<GibberishSpec>& gibberish) {
    // Both arguments must come from this registry.
    registry.concept_by_id(cc.id);
    registry.language(language.code);

    const std::string en_reference = std::string(kPhotoOf) + " " + cc.english_term;
    switch (kind) {
        case TemplateKind::EnglishReference:
            return assemble(kind, cc, language, {{en_reference, "EN"}});
        case TemplateKind::FullyTranslated: {
            const std::string& term = require_translation(cc, language);
            return assemble(kind, cc, language, {{replace_placeholder(language.photo_of_template, "{concept}", term), language.code}});
        }
        case TemplateKind::TranslatedConcept: {
            const std::string& term = require_translation(cc, language);
            return assemble(kind, cc, language, {{std::string(kPhotoOf), "EN"}, {term, language.code}});
        }
        case TemplateKind::EnglishWithNation: {
            const Nationality& n = registry.nationality(language.code);
            return assemble(kind, cc, language, {{std::string(kPhotoOf) + " " + n.primary_name + " " + cc.english_term, "EN"}});
        }
        case TemplateKind::EnglishWithGibberish: {
            if (!gibberish) throw Error("english_with_gibberish requires a gibberish spec (concept '" + cc.id + "', " + language.code + ")");
            return assemble(kind, cc, language,
                            {{en_reference, "EN"}, {gen_gibberish(language, gibberish->length, gibberish->rng_seed), language.code}});
        }
    }
    throw Error("unhandled template kind");
}

std::string gen_gibberish(const Language& language, std::size_t length, std::uint64_t rng_seed) {
    if (length < 1) throw Error("gibberish length must be at least 1");
    if (language.alphabet.empty()) throw Error("language '" + language.code + "' has an empty alphabet");
    Rng rng(rng_seed);
    std::string out;
    for (std::size_t i = 0; i < length; ++i) utf8_append(out, language.alphabet[rng.uniform_index(language.alphabet.size())]);
    return out;
}

std::string_view to_string(EvalPromptKind kind) {
    switch (kind) {
        case EvalPromptKind::NationalStyle: return "national_style";
        case EvalPromptKind::DimensionAspects: return "dimension_aspects";
        case EvalPromptKind::XnaQuestion: return "xna_question";
        case EvalPromptKind::XdpQuestion: return "xdp_question";
        case EvalPromptKind::ConceptReference: return "concept_reference";
        case EvalPromptKind::CoverageQuestion: return "coverage_question";
    }
    return "unknown";
}

std::string render_eval_prompt(EvalPromptKind kind, const PromptArgs& args) {
    std::vector<std::string_view> required;
    std::string pattern;
    switch (kind) {
        case EvalPromptKind::NationalStyle:
            pattern = "a photo with {national} style";
            required = {"national"};
            break;
        case EvalPromptKind::DimensionAspects:
            pattern = "a photo with {dimension} aspects";
            required = {"dimension"};
            break;
        case EvalPromptKind::XnaQuestion:
            pattern = "What is the country of origin for the depicted photo?";
            break;
        case EvalPromptKind::XdpQuestion:
            pattern = "Are there more {d0} features in the photo or more {d1}?";
            required = {"d0", "d1"};
            break;
        case EvalPromptKind::ConceptReference:
            pattern = "a photo of {concept}";
            required = {"concept"};
            break;
        case EvalPromptKind::CoverageQuestion:
            pattern = "Question: What is in the photo? Answer:";
            break;
    }
    for (const auto& [name, _] : args) {
        if (std::find(required.begin(), required.end(), name) == required.end())
            throw Error("unexpected placeholder '" + name + "' for " + std::string(to_string(kind)));
    }
    for (std::string_view name : required) {
        const auto it = args.find(name);
        if (it == args.end()) throw Error("missing placeholder '" + std::string(name) + "' for " + std::string(to_string(kind)));
        // Nationalities are printed lowercase in style prompts.
        const std::string value = kind == EvalPromptKind::NationalStyle ? ascii_lower(it->second) : it->second;
        pattern = replace_placeholder(std::move(pattern), "{" + std::string(name) + "}", value);
    }
    return pattern;
}

std::string national_style_prompt(std::string_view nationality_name) {
    return render_eval_prompt(EvalPromptKind::NationalStyle, {{"national", std::string(nationality_name)}});
}

std::string dimension_aspect_prompt(const DimensionPole& pole) {
    return render_eval_prompt(EvalPromptKind::DimensionAspects, {{"dimension", pole.aspect}});
}

std::string xdp_question(const CulturalDimension& dimension) {
    return render_eval_prompt(EvalPromptKind::XdpQuestion, {{"d0", dimension.pole_positive.adjective}, {"d1", dimension.pole_negative.adjective}});
}

std::string concept_reference_prompt(const CulturalConcept& cc) {
    return render_eval_prompt(EvalPromptKind::ConceptReference, {{"concept", cc.english_term}});
}

// ---------------------------------------------------------------------------

std::uint64_t gibberish_seed(std::int64_t base_seed, std::string_view concept_id, std::string_view language_code) {
    std::string key = std::to_string(base_seed);
    key.push_back('\x1f');
    key += concept_id;
    key.push_back('\x1f');
    key += language_code;
    return fnv1a64(key);
}

ModelConfig read_model_config(const std::filesystem::path& path, const Registry& registry) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
    ModelConfig cfg;
    try {
        cfg.model_id = doc.at("model_id").get<std::string>();
        const auto& langs = doc.at("languages");
        if (langs.is_string() && langs.get<std::string>() == "all") {
            for (const auto& l : registry.languages()) cfg.languages.push_back(l.code);
        } else {
            cfg.languages = langs.get<std::vector<std::string>>();
        }
        const auto& kinds = doc.at("template_kinds");
        if (kinds.is_string() && kinds.get<std::string>() == "all") {
            cfg.template_kinds.assign(std::begin(kAllTemplateKinds), std::end(kAllTemplateKinds));
        } else {
            for (const auto& t : kinds) cfg.template_kinds.push_back(parse_template_kind(t.get<std::string>()));
        }
        const auto& concepts = doc.at("concepts");
        if (concepts.is_string()) {
            const auto sel = concepts.get<std::string>();
            if (sel != "all" && sel != "core") throw Error("concepts must be \"all\", \"core\" or a list");
            for (const auto& c : registry.concepts()) {
                if (sel == "all" || c.domain_id != "countries") cfg.concept_ids.push_back(c.id);
            }
        } else {
            cfg.concept_ids = concepts.get<std::vector<std::string>>();
        }
        cfg.images_per_set = doc.value("k", 4);
        cfg.base_seed = doc.value("base_seed", std::int64_t{42});
        cfg.gibberish_length = doc.value("gibberish_length", std::size_t{10});
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
    return cfg;
}

DatasetManifest enumerate_dataset(const ModelConfig& config, const Registry& registry) {
    if (config.images_per_set < 1) throw Error("images per set must be at least 1");
    if (config.gibberish_length < 1) throw Error("gibberish length must be at least 1");

    std::set<std::string> concepts;
    for (const auto& id : config.concept_ids) {
        registry.concept_by_id(id);
        if (!concepts.insert(id).second) throw Error("duplicate concept id '" + id + "' in model config");
    }
    std::set<std::string> languages;
    for (const auto& code : config.languages) {
        registry.language(code);
        if (!languages.insert(code).second) throw Error("duplicate language '" + code + "' in model config");
    }
    std::set<std::string> templates;
    for (TemplateKind k : config.template_kinds) {
        if (!templates.insert(std::string(to_string(k))).second)
            throw Error("duplicate template '" + std::string(to_string(k)) + "' in model config");
    }

    // std::set iteration gives the lexicographic (concept_id, template, language) order.
    std::vector<std::tuple<const std::string*, TemplateKind, const std::string*>> order;
    order.reserve(concepts.size() * templates.size() * languages.size());
    for (const auto& c : concepts) {
        for (const auto& t : templates) {
            for (const auto& l : languages) order.emplace_back(&c, parse_template_kind(t), &l);
        }
    }

    DatasetManifest manifest;
    manifest.model_id = config.model_id;
    manifest.entries.resize(order.size());
    std::vector<std::string> errors(order.size());

    const auto n = static_cast<std::ptrdiff_t>(order.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& [cid, kind, code] = order[static_cast<std::size_t>(i)];
        try {
            const CulturalConcept& cc = registry.concept_by_id(*cid);
            const Language& language = registry.language(*code);
            std::optional<GibberishSpec> gib;
            if (kind == TemplateKind::EnglishWithGibberish)
                gib = GibberishSpec{config.gibberish_length, gibberish_seed(config.base_seed, *cid, *code)};
            auto& e = manifest.entries[static_cast<std::size_t>(i)];
            e.concept_id = *cid;
            e.template_kind = kind;
            e.language_code = *code;
            e.prompt_text = render_prompt(kind, cc, language, registry, gib).text;
            e.images_per_set = config.images_per_set;
            e.base_seed = config.base_seed;
        } catch (const std::exception& ex) {
            errors[static_cast<std::size_t>(i)] = ex.what();
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i].empty()) {
            const auto& [cid, kind, code] = order[i];
            throw Error("cannot render (" + *cid + ", " + std::string(to_string(kind)) + ", " + *code + "): " + errors[i]);
        }
    }
    return manifest;
}

std::string manifest_to_jsonl(const DatasetManifest& manifest) {
    std::string out;
    for (const auto& e : manifest.entries) {
        nlohmann::ordered_json line;
        line["model"] = manifest.model_id;
        line["concept"] = e.concept_id;
        line["pt"] = std::string(to_string(e.template_kind));
        line["lang"] = e.language_code;
        line["prompt"] = e.prompt_text;
        line["k"] = e.images_per_set;
        line["seed"] = e.base_seed;
        out += line.dump();
        out.push_back('\n');
    }
    return out;
}

DatasetManifest manifest_from_jsonl(std::string_view text, const Registry& registry) {
    DatasetManifest manifest;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto model = j.at("model").get<std::string>();
            if (manifest.entries.empty() && manifest.model_id.empty()) manifest.model_id = model;
            if (model != manifest.model_id) throw Error("mixes models '" + manifest.model_id + "' and '" + model + "'");
            ManifestEntry e;
            e.concept_id = j.at("concept").get<std::string>();
            registry.concept_by_id(e.concept_id);
            e.template_kind = parse_template_kind(j.at("pt").get<std::string>());
            e.language_code = j.at("lang").get<std::string>();
            registry.language(e.language_code);
            e.prompt_text = j.at("prompt").get<std::string>();
            e.images_per_set = j.at("k").get<int>();
            e.base_seed = j.at("seed").get<std::int64_t>();
            if (e.images_per_set < 1) throw Error("k must be at least 1");
            if (!seen.emplace(e.concept_id, std::string(to_string(e.template_kind)), e.language_code).second)
                throw Error("duplicate entry (" + e.concept_id + ", " + std::string(to_string(e.template_kind)) + ", " + e.language_code + ")");
            manifest.entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw Error("manifest line " + std::to_string(line_no) + ": " + ex.what());
        } catch (const Error& ex) {
            throw Error("manifest line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return manifest;
}

}  // namespace cultprobe
