#include "cultprobe/ontology.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "cultprobe/error.hpp"
#include "cultprobe/util.hpp"

namespace cultprobe {

namespace detail {
extern const std::string_view kBundledRegistryJson;
}

using nlohmann::json;

namespace {

const json& field(const json& obj, const char* key, const std::string& context) {
    if (!obj.is_object()) throw Error("registry: " + context + " is not an object");
    const auto it = obj.find(key);
    if (it == obj.end()) throw Error("registry: " + context + " is missing '" + key + "'");
    return *it;
}

std::string string_field(const json& obj, const char* key, const std::string& context) {
    const json& v = field(obj, key, context);
    if (!v.is_string()) throw Error("registry: " + context + "." + key + " must be a string");
    return v.get<std::string>();
}

std::vector<std::string> string_list(const json& v, const std::string& context) {
    if (!v.is_array()) throw Error("registry: " + context + " must be an array");
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) throw Error("registry: " + context + " must contain strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

DimensionPole parse_pole(const json& j, const std::string& context) {
    DimensionPole p;
    p.name = string_field(j, "name", context);
    p.adjective = string_field(j, "adjective", context);
    p.aspect = string_field(j, "aspect", context);
    if (j.contains("aliases")) p.aliases = string_list(j.at("aliases"), context + ".aliases");
    return p;
}

json pole_json(const DimensionPole& p) {
    return json{{"name", p.name}, {"adjective", p.adjective}, {"aspect", p.aspect}, {"aliases", p.aliases}};
}

bool is_letter_candidate(char32_t cp) {
    if (cp < 0x80) return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    // General punctuation, spaces and replacement characters are never letters.
    if (cp >= 0x2000 && cp <= 0x206F) return false;
    if (cp == 0x00A0 || cp == 0x3000 || cp == 0xFFFD) return false;
    if (cp >= 0x3000 && cp <= 0x303F) return false;
    return true;
}

}  // namespace

bool Language::in_alphabet(char32_t cp) const {
    return std::binary_search(sorted_alphabet_.begin(), sorted_alphabet_.end(), cp);
}

bool Language::in_alphabet(std::string_view utf8_text) const {
    const auto cps = utf8_decode(utf8_text);
    return std::all_of(cps.begin(), cps.end(), [this](char32_t cp) { return in_alphabet(cp); });
}

const std::string* CulturalConcept::translation(std::string_view language_code) const {
    const auto it = translations.find(std::string(language_code));
    return it == translations.end() ? nullptr : &it->second;
}

const DimensionPole* CulturalDimension::pole(std::string_view name) const {
    if (pole_positive.name == name) return &pole_positive;
    if (pole_negative.name == name) return &pole_negative;
    return nullptr;
}

std::string_view to_string(NationalityOrder order) { return order == NationalityOrder::Primary ? "primary" : "extended"; }

NationalityOrder parse_nationality_order(std::string_view text) {
    if (text == "primary") return NationalityOrder::Primary;
    if (text == "extended") return NationalityOrder::Extended;
    throw Error("unknown nationality order '" + std::string(text) + "' (expected primary|extended)");
}

Registry Registry::from_json(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(std::string("registry: parse failure: ") + e.what());
    }
    Registry r;
    r.version_ = string_field(doc, "version", "document");

    for (const auto& jl : field(doc, "languages", "document")) {
        Language l;
        l.code = string_field(jl, "code", "language");
        const std::string ctx = "language " + l.code;
        l.display_name = string_field(jl, "display_name", ctx);
        l.alphabet = utf8_decode(string_field(jl, "alphabet", ctx));
        l.photo_of_template = string_field(jl, "photo_of_template", ctx);
        r.languages_.push_back(std::move(l));
    }
    for (const auto& jn : field(doc, "nationalities", "document")) {
        Nationality n;
        n.language_code = string_field(jn, "language_code", "nationality");
        const std::string ctx = "nationality of " + n.language_code;
        n.primary_name = string_field(jn, "primary_name", ctx);
        if (jn.contains("additional_names")) n.additional_names = string_list(jn.at("additional_names"), ctx + ".additional_names");
        if (jn.contains("country_aliases")) n.country_aliases = string_list(jn.at("country_aliases"), ctx + ".country_aliases");
        if (jn.contains("additional_aliases")) {
            const auto& aa = jn.at("additional_aliases");
            if (!aa.is_object()) throw Error("registry: " + ctx + ".additional_aliases must be an object");
            for (const auto& [name, list] : aa.items()) n.additional_aliases[name] = string_list(list, ctx + ".additional_aliases." + name);
        }
        r.nationalities_.push_back(std::move(n));
    }
    for (const auto& jd : field(doc, "domains", "document")) {
        CulturalDomain d;
        d.id = string_field(jd, "id", "domain");
        d.name = string_field(jd, "name", "domain " + d.id);
        d.concept_ids = string_list(field(jd, "concept_ids", "domain " + d.id), "domain " + d.id + ".concept_ids");
        r.domains_.push_back(std::move(d));
    }
    for (const auto& jc : field(doc, "concepts", "document")) {
        CulturalConcept c;
        c.id = string_field(jc, "id", "concept");
        const std::string ctx = "concept " + c.id;
        c.english_term = string_field(jc, "english_term", ctx);
        c.domain_id = string_field(jc, "domain_id", ctx);
        c.tangible = jc.value("tangible", false);
        c.supplementary = jc.value("supplementary", false);
        if (jc.contains("translations")) {
            const auto& tr = jc.at("translations");
            if (!tr.is_object()) throw Error("registry: " + ctx + ".translations must be an object");
            for (const auto& [code, text] : tr.items()) {
                if (!text.is_string()) throw Error("registry: " + ctx + ".translations." + code + " must be a string");
                c.translations[code] = text.get<std::string>();
            }
        }
        r.concepts_.push_back(std::move(c));
    }
    for (const auto& jd : field(doc, "dimensions", "document")) {
        CulturalDimension d;
        d.id = string_field(jd, "id", "dimension");
        d.pole_positive = parse_pole(field(jd, "pole_positive", "dimension " + d.id), "dimension " + d.id + ".pole_positive");
        d.pole_negative = parse_pole(field(jd, "pole_negative", "dimension " + d.id), "dimension " + d.id + ".pole_negative");
        r.dimensions_.push_back(std::move(d));
    }
    r.validate();
    return r;
}

void Registry::validate() {
    for (std::size_t i = 0; i < languages_.size(); ++i) {
        auto& l = languages_[i];
        if (!language_index_.emplace(l.code, i).second) throw Error("registry: duplicate language code '" + l.code + "'");
        if (l.alphabet.empty()) throw Error("registry: language '" + l.code + "' has an empty alphabet");
        std::set<char32_t> seen;
        for (char32_t cp : l.alphabet) {
            if (!is_letter_candidate(cp)) throw Error("registry: alphabet of '" + l.code + "' contains a non-letter character");
            if (!seen.insert(cp).second) throw Error("registry: alphabet of '" + l.code + "' repeats a character");
        }
        l.sorted_alphabet_ = l.alphabet;
        std::sort(l.sorted_alphabet_.begin(), l.sorted_alphabet_.end());
        if (l.photo_of_template.find("{concept}") == std::string::npos)
            throw Error("registry: photo_of_template of '" + l.code + "' lacks the {concept} placeholder");
        if (l.code == "EN" && l.alphabet != U"abcdefghijklmnopqrstuvwxyz")
            throw Error("registry: EN alphabet must be the 26 Latin letters");
    }
    for (std::size_t i = 0; i < nationalities_.size(); ++i) {
        const auto& n = nationalities_[i];
        if (!language_index_.count(n.language_code)) throw Error("registry: nationality references unknown language '" + n.language_code + "'");
        if (!nationality_index_.emplace(n.language_code, i).second)
            throw Error("registry: duplicate nationality entry for language '" + n.language_code + "'");
        if (n.primary_name.empty()) throw Error("registry: nationality of '" + n.language_code + "' has an empty primary name");
        for (const auto& [name, _] : n.additional_aliases) {
            if (std::find(n.additional_names.begin(), n.additional_names.end(), name) == n.additional_names.end())
                throw Error("registry: aliases given for '" + name + "', which is not an additional nationality of '" + n.language_code + "'");
        }
    }
    for (const auto& l : languages_) {
        if (!nationality_index_.count(l.code)) throw Error("registry: language '" + l.code + "' has no nationality entry");
    }
    for (std::size_t i = 0; i < domains_.size(); ++i) {
        if (!domain_index_.emplace(domains_[i].id, i).second) throw Error("registry: duplicate domain id '" + domains_[i].id + "'");
    }
    for (std::size_t i = 0; i < concepts_.size(); ++i) {
        const auto& c = concepts_[i];
        if (c.id.empty()) throw Error("registry: concept with empty id");
        if (!concept_index_.emplace(c.id, i).second) throw Error("registry: duplicate concept id '" + c.id + "'");
        if (trim(c.english_term).empty()) throw Error("registry: concept '" + c.id + "' has an empty english_term");
        if (!domain_index_.count(c.domain_id)) throw Error("registry: concept '" + c.id + "' references unknown domain '" + c.domain_id + "'");
        for (const auto& [code, _] : c.translations) {
            if (!language_index_.count(code)) throw Error("registry: concept '" + c.id + "' has a translation for unknown language '" + code + "'");
        }
        for (const auto& l : languages_) {
            if (!c.translations.count(l.code)) warnings_.push_back("concept '" + c.id + "' has no " + l.code + " translation");
        }
    }
    // Every concept belongs to exactly one domain, the one it names.
    std::map<std::string, std::string> owner;
    for (const auto& d : domains_) {
        for (const auto& cid : d.concept_ids) {
            const auto it = concept_index_.find(cid);
            if (it == concept_index_.end()) throw Error("registry: domain '" + d.id + "' references unknown concept '" + cid + "'");
            if (!owner.emplace(cid, d.id).second) throw Error("registry: concept '" + cid + "' is listed in more than one domain");
            if (concepts_[it->second].domain_id != d.id)
                throw Error("registry: concept '" + cid + "' is listed under domain '" + d.id + "' but names '" + concepts_[it->second].domain_id + "'");
        }
    }
    for (const auto& c : concepts_) {
        if (!owner.count(c.id)) throw Error("registry: concept '" + c.id + "' is not listed by its domain '" + c.domain_id + "'");
    }
    for (std::size_t i = 0; i < dimensions_.size(); ++i) {
        const auto& d = dimensions_[i];
        if (!dimension_index_.emplace(d.id, i).second) throw Error("registry: duplicate dimension id '" + d.id + "'");
        if (d.pole_positive.name == d.pole_negative.name) throw Error("registry: dimension '" + d.id + "' has identical pole names");
    }
}

const Language& Registry::language(std::string_view code) const {
    if (const auto* l = find_language(code)) return *l;
    throw Error("unknown language code '" + std::string(code) + "'");
}

const Language* Registry::find_language(std::string_view code) const {
    const auto it = language_index_.find(code);
    return it == language_index_.end() ? nullptr : &languages_[it->second];
}

const Nationality& Registry::nationality(std::string_view language_code) const {
    const auto it = nationality_index_.find(language_code);
    if (it == nationality_index_.end()) throw Error("unknown language code '" + std::string(language_code) + "'");
    return nationalities_[it->second];
}

const CulturalConcept& Registry::concept_by_id(std::string_view id) const {
    if (const auto* c = find_concept(id)) return *c;
    throw Error("unknown concept id '" + std::string(id) + "'");
}

const CulturalConcept* Registry::find_concept(std::string_view id) const {
    const auto it = concept_index_.find(id);
    return it == concept_index_.end() ? nullptr : &concepts_[it->second];
}

const CulturalDomain& Registry::domain(std::string_view id) const {
    const auto it = domain_index_.find(id);
    if (it == domain_index_.end()) throw Error("unknown domain id '" + std::string(id) + "'");
    return domains_[it->second];
}

const CulturalDimension& Registry::dimension(std::string_view id) const {
    const auto it = dimension_index_.find(id);
    if (it == dimension_index_.end()) throw Error("unknown dimension id '" + std::string(id) + "'");
    return dimensions_[it->second];
}

std::vector<std::string> Registry::nationality_for(std::string_view language_code, NationalityOrder order) const {
    const Nationality& n = nationality(language_code);
    std::vector<std::string> out{n.primary_name};
    if (order == NationalityOrder::Extended) out.insert(out.end(), n.additional_names.begin(), n.additional_names.end());
    return out;
}

std::string Registry::to_json() const {
    json doc;
    doc["version"] = version_;
    doc["languages"] = json::array();
    for (const auto& l : languages_) {
        doc["languages"].push_back(
            {{"code", l.code}, {"display_name", l.display_name}, {"alphabet", utf8_encode(l.alphabet)}, {"photo_of_template", l.photo_of_template}});
    }
    doc["nationalities"] = json::array();
    for (const auto& n : nationalities_) {
        json aa = json::object();
        for (const auto& [name, list] : n.additional_aliases) aa[name] = list;
        doc["nationalities"].push_back({{"language_code", n.language_code},
                                        {"primary_name", n.primary_name},
                                        {"additional_names", n.additional_names},
                                        {"country_aliases", n.country_aliases},
                                        {"additional_aliases", aa}});
    }
    doc["domains"] = json::array();
    for (const auto& d : domains_) doc["domains"].push_back({{"id", d.id}, {"name", d.name}, {"concept_ids", d.concept_ids}});
    doc["concepts"] = json::array();
    for (const auto& c : concepts_) {
        json tr = json::object();
        for (const auto& [code, text] : c.translations) tr[code] = text;
        doc["concepts"].push_back({{"id", c.id},
                                   {"english_term", c.english_term},
                                   {"domain_id", c.domain_id},
                                   {"tangible", c.tangible},
                                   {"supplementary", c.supplementary},
                                   {"translations", tr}});
    }
    doc["dimensions"] = json::array();
    for (const auto& d : dimensions_) {
        doc["dimensions"].push_back({{"id", d.id}, {"pole_positive", pole_json(d.pole_positive)}, {"pole_negative", pole_json(d.pole_negative)}});
    }
    return doc.dump(1) + "\n";
}

bool Registry::operator==(const Registry& other) const {
    return version_ == other.version_ && languages_ == other.languages_ && nationalities_ == other.nationalities_ &&
           domains_ == other.domains_ && concepts_ == other.concepts_ && dimensions_ == other.dimensions_;
}

Registry Registry::from_file(const std::filesystem::path& path) {
    try {
        return from_json(read_file(path));
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

const Registry& Registry::bundled() {
    static const Registry registry = from_json(detail::kBundledRegistryJson);
    return registry;
}

std::string_view bundled_registry_json() { return detail::kBundledRegistryJson; }

Registry load_ontology(const std::optional<std::filesystem::path>& path) {
    if (path) return Registry::from_file(*path);
    if (const char* env = std::getenv("CULTPROBE_REGISTRY"); env != nullptr && *env != '\0') return Registry::from_file(env);
    return Registry::bundled();
}

}  // namespace cultprobe
