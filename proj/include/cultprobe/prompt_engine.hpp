#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cultprobe/ontology.hpp"

namespace cultprobe {

enum class TemplateKind {
    EnglishReference,   // EN: "a photo of <concept>"
    FullyTranslated,    // T: "a photo of <concept>"
    TranslatedConcept,  // EN: "a photo of" + T: <concept>
    EnglishWithNation,  // EN: "a photo of <nationality> <concept>"
    EnglishWithGibberish,  // EN: "a photo of <concept>" + T: <gibberish>
};

inline constexpr TemplateKind kAllTemplateKinds[] = {
    TemplateKind::EnglishReference, TemplateKind::FullyTranslated, TemplateKind::TranslatedConcept,
    TemplateKind::EnglishWithNation, TemplateKind::EnglishWithGibberish,
};

std::string_view to_string(TemplateKind kind);
TemplateKind parse_template_kind(std::string_view slug);

struct GibberishSpec {
    std::size_t length = 10;  // target letter count
    std::uint64_t rng_seed = 0;
};

struct PromptSegment {
    std::string text;
    std::string language_code;

    bool operator==(const PromptSegment&) const = default;
};

struct PromptInstance {
    std::string text;  // segments joined by single spaces
    TemplateKind kind = TemplateKind::EnglishReference;
    std::string concept_id;
    std::string language_code;
    std::vector<PromptSegment> segments;

    bool operator==(const PromptInstance&) const = default;
};

PromptInstance render_prompt(TemplateKind kind, const CulturalConcept& cc, const Language& language, const Registry& registry,
                             const std::optional<GibberishSpec>& gibberish = std::nullopt);

// Deterministic in (language, length, rng_seed); every character comes from
// the language alphabet.
std::string gen_gibberish(const Language& language, std::size_t length, std::uint64_t rng_seed);

// ---------------------------------------------------------------------------
// Evaluation prompts and questions
// ---------------------------------------------------------------------------

enum class EvalPromptKind {
    NationalStyle,     // {national}
    DimensionAspects,  // {dimension}
    XnaQuestion,       // no placeholders
    XdpQuestion,       // {d0}, {d1}
    ConceptReference,  // {concept}
    CoverageQuestion,  // no placeholders
};

std::string_view to_string(EvalPromptKind kind);

using PromptArgs = std::map<std::string, std::string, std::less<>>;

// Exact table strings. Missing or unexpected placeholders are errors.
std::string render_eval_prompt(EvalPromptKind kind, const PromptArgs& args);

// Convenience forms used when locating baseline embeddings.
std::string national_style_prompt(std::string_view nationality_name);
std::string dimension_aspect_prompt(const DimensionPole& pole);
std::string xdp_question(const CulturalDimension& dimension);
std::string concept_reference_prompt(const CulturalConcept& cc);

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string concept_id;
    TemplateKind template_kind = TemplateKind::EnglishReference;
    std::string language_code;
    std::string prompt_text;
    int images_per_set = 4;
    std::int64_t base_seed = 42;  // image j uses base_seed + j

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::string model_id;
    std::vector<ManifestEntry> entries;

    bool operator==(const DatasetManifest&) const = default;
};

struct ModelConfig {
    std::string model_id;
    std::vector<std::string> languages;
    std::vector<TemplateKind> template_kinds;
    std::vector<std::string> concept_ids;
    int images_per_set = 4;
    std::int64_t base_seed = 42;
    std::size_t gibberish_length = 10;
};

// Reads a model config. "concepts" may be "all", "core" (non-country) or a
// list of ids; "languages" and "template_kinds" may be "all" or a list.
ModelConfig read_model_config(const std::filesystem::path& path, const Registry& registry);

// Seed of the gibberish term of one (concept_id, language) entry.
std::uint64_t gibberish_seed(std::int64_t base_seed, std::string_view concept_id, std::string_view language_code);

DatasetManifest enumerate_dataset(const ModelConfig& config, const Registry& registry);

std::string manifest_to_jsonl(const DatasetManifest& manifest);
DatasetManifest manifest_from_jsonl(std::string_view text, const Registry& registry);

}  // namespace cultprobe
