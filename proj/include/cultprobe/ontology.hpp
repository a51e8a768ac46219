#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cultprobe {

struct Language {
    std::string code;  // EN, ES, DE, RU, FR, EL, IW, AR, ZH, HI
    std::string display_name;
    // Letters in registry order. Gibberish sampling draws from this order.
    std::u32string alphabet;
    // Translated "a photo of {concept}" used by the fully translated template.
    std::string photo_of_template;

    // Total over every Unicode scalar value.
    bool in_alphabet(char32_t cp) const;
    bool in_alphabet(std::string_view utf8_text) const;

    bool operator==(const Language&) const = default;

private:
    friend class Registry;
    std::u32string sorted_alphabet_;
};

struct Nationality {
    std::string language_code;
    std::string primary_name;
    std::vector<std::string> additional_names;
    std::vector<std::string> country_aliases;
    // Aliases of each additional nationality, keyed by its name.
    std::map<std::string, std::vector<std::string>> additional_aliases;

    bool operator==(const Nationality&) const = default;
};

struct CulturalConcept {
    std::string id;
    std::string english_term;
    std::string domain_id;
    std::map<std::string, std::string> translations;  // language code -> text
    bool tangible = false;
    // Parenthesized "additional" concepts of the source table, and fill-ins.
    bool supplementary = false;

    const std::string* translation(std::string_view language_code) const;
    bool operator==(const CulturalConcept&) const = default;
};

struct CulturalDomain {
    std::string id;
    std::string name;
    std::vector<std::string> concept_ids;

    bool operator==(const CulturalDomain&) const = default;
};

struct DimensionPole {
    std::string name;       // "Modern"
    std::string adjective;  // "modern", used in forced-choice questions
    std::string aspect;     // "modernity", used in projection prompts
    std::vector<std::string> aliases;

    bool operator==(const DimensionPole&) const = default;
};

struct CulturalDimension {
    std::string id;
    DimensionPole pole_positive;  // d0, the first-named pole
    DimensionPole pole_negative;  // d1

    const DimensionPole* pole(std::string_view name) const;
    bool operator==(const CulturalDimension&) const = default;
};

enum class NationalityOrder { Primary, Extended };

std::string_view to_string(NationalityOrder order);
NationalityOrder parse_nationality_order(std::string_view text);

// Immutable, validated ontology. Construct through the load functions below.
class Registry {
public:
    const std::string& version() const { return version_; }
    const std::vector<Language>& languages() const { return languages_; }
    const std::vector<Nationality>& nationalities() const { return nationalities_; }
    const std::vector<CulturalDomain>& domains() const { return domains_; }
    const std::vector<CulturalConcept>& concepts() const { return concepts_; }
    const std::vector<CulturalDimension>& dimensions() const { return dimensions_; }
    // Non-fatal findings, e.g. missing translations.
    const std::vector<std::string>& warnings() const { return warnings_; }

    // Throwing lookups; the message names the unknown id.
    const Language& language(std::string_view code) const;
    const Nationality& nationality(std::string_view language_code) const;
    const CulturalConcept& concept_by_id(std::string_view id) const;
    const CulturalDomain& domain(std::string_view id) const;
    const CulturalDimension& dimension(std::string_view id) const;

    const Language* find_language(std::string_view code) const;
    const CulturalConcept* find_concept(std::string_view id) const;

    std::vector<std::string> nationality_for(std::string_view language_code, NationalityOrder order) const;

    std::string to_json() const;

    bool operator==(const Registry& other) const;

    static Registry from_json(std::string_view json_text);
    static Registry from_file(const std::filesystem::path& path);
    static const Registry& bundled();

private:
    Registry() = default;
    void validate();

    std::string version_;
    std::vector<Language> languages_;
    std::vector<Nationality> nationalities_;
    std::vector<CulturalDomain> domains_;
    std::vector<CulturalConcept> concepts_;
    std::vector<CulturalDimension> dimensions_;
    std::vector<std::string> warnings_;
    std::map<std::string, std::size_t, std::less<>> language_index_;
    std::map<std::string, std::size_t, std::less<>> concept_index_;
    std::map<std::string, std::size_t, std::less<>> domain_index_;
    std::map<std::string, std::size_t, std::less<>> dimension_index_;
    std::map<std::string, std::size_t, std::less<>> nationality_index_;
};

std::string_view bundled_registry_json();

// Resolves the registry for a run: an explicit path wins, then the
// CULTPROBE_REGISTRY environment variable, then the bundled registry.
Registry load_ontology(const std::optional<std::filesystem::path>& path = std::nullopt);

}  // namespace cultprobe
