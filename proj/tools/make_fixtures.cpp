// Regenerates the desk-scale fixtures under tests/fixtures. Everything is
// seeded, so rerunning reproduces the committed files byte for byte.
//
//   make_fixtures <out_dir>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cultprobe/embedding_store.hpp"
#include "cultprobe/error.hpp"
#include "cultprobe/extrinsic.hpp"
#include "cultprobe/ontology.hpp"
#include "cultprobe/prompt_engine.hpp"
#include "cultprobe/util.hpp"

using namespace cultprobe;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::size_t kDim = 16;

std::vector<double> gaussian(Rng& rng) {
    std::vector<double> v(kDim);
    for (double& x : v) x = rng.normal();
    return v;
}

std::vector<float> unit(const std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    std::vector<float> out;
    for (double x : v) out.push_back(static_cast<float>(x / n));
    return out;
}

// a*x + b*y + c*noise
std::vector<double> mix(double a, const std::vector<double>& x, double b, const std::vector<double>& y, double c, Rng& rng) {
    std::vector<double> v(kDim);
    for (std::size_t i = 0; i < kDim; ++i) v[i] = a * x[i] + b * y[i] + c * rng.normal();
    return v;
}

struct ArchiveBuilder {
    std::vector<SetKey> keys;
    std::vector<float> data;
    void add(SetKey key, const std::vector<double>& v) {
        const auto u = unit(v);
        data.insert(data.end(), u.begin(), u.end());
        keys.push_back(std::move(key));
    }
};

void write_archive(const Registry& registry, const fs::path& dir) {
    Rng rng(20240517);
    const std::vector<std::string> langs{"EN", "ES", "HI", "ZH"};
    const std::vector<std::string> concepts{"car", "bicycle", "train", "teacher"};
    const std::vector<std::string> pts{"english_reference", "fully_translated", "english_with_nation"};
    // How strongly images carry their language's direction, per template.
    const std::map<std::string, double> lang_weight{{"english_reference", 0.35}, {"fully_translated", 0.9}, {"english_with_nation", 1.3}};
    const std::string model = "toy-diffusion";

    std::map<std::string, std::vector<double>> lang_vec, concept_vec;
    for (const auto& l : registry.languages()) lang_vec[l.code] = gaussian(rng);
    for (const auto& c : concepts) concept_vec[c] = gaussian(rng);

    ArchiveBuilder b;
    std::set<std::string> texts;
    const auto add_text = [&](const std::string& text, const std::vector<double>& v) {
        if (texts.insert(text).second) b.add(SetKey::text_baseline(text), v);
    };
    // Nationality style prompts, near the owning language's direction.
    for (const auto& n : registry.nationalities()) {
        std::vector<std::string> names{n.primary_name};
        names.insert(names.end(), n.additional_names.begin(), n.additional_names.end());
        for (const auto& name : names) add_text(national_style_prompt(name), mix(1.0, lang_vec[n.language_code], 0.0, lang_vec[n.language_code], 0.5, rng));
    }
    // Pole aspects: each language leans toward one pole per dimension.
    for (const auto& d : registry.dimensions()) {
        add_text(dimension_aspect_prompt(d.pole_positive), gaussian(rng));
        add_text(dimension_aspect_prompt(d.pole_negative), gaussian(rng));
    }
    for (const auto& c : concepts) {
        const auto& cc = registry.concept_by_id(c);
        add_text(concept_reference_prompt(cc), mix(1.0, concept_vec[c], 0.0, concept_vec[c], 0.3, rng));
        add_text(cc.english_term, mix(1.0, concept_vec[c], 0.0, concept_vec[c], 0.2, rng));
    }
    for (const auto& l : langs) {
        for (const auto& c : concepts) {
            for (const auto& pt : pts) {
                // The teacher concept is missing for ZH under one template, so
                // coverage and CCS see an uneven grid.
                if (l == "ZH" && c == "teacher" && pt == "english_with_nation") continue;
                for (int k = 0; k < 4; ++k) {
                    b.add(SetKey::image(model, c, pt, l, k), mix(lang_weight.at(pt), lang_vec[l], 0.8, concept_vec[c], 0.45, rng));
                    const double w = pt == "english_reference" ? 1.0 : 0.6;
                    b.add(SetKey::description(model, c, pt, l, k, "a " + c + " seen in " + l + " #" + std::to_string(k)), mix(w, concept_vec[c], 0.3, lang_vec[l], 0.5, rng));
                }
            }
            // Natural photos of the concept from the culture.
            if (l == "HI" && c == "teacher") continue;
            for (int k = 0; k < 3; ++k) b.add(SetKey::visual("natural-photos", c, "photo", l, k), mix(0.8, lang_vec[l], 0.8, concept_vec[c], 0.4, rng));
        }
    }
    export_archive(EmbeddingStore::from_rows(kDim, std::move(b.keys), std::move(b.data)), dir);
}

// HI row of the XNA table: per-model correct counts out of 100 image sets
// average to 416 / 600 = 0.6933.
void write_xna_answers(const Registry& registry, const fs::path& path) {
    const std::vector<std::pair<std::string, int>> models{{"model-a", 61}, {"model-b", 62}, {"model-c", 74}, {"model-d", 74}, {"model-e", 72}, {"model-f", 73}};
    std::vector<std::string> concepts;
    for (const auto& c : registry.concepts()) {
        if (c.domain_id != "countries" && concepts.size() < 20) concepts.push_back(c.id);
    }
    const std::vector<std::string> pts{"english_reference", "fully_translated", "translated_concept", "english_with_nation", "english_with_gibberish"};
    // Four answers per set. Sets marked with "__error__" lost one image to a
    // VQA failure; the vote runs over the remaining three.
    const std::vector<std::vector<std::string>> correct{
        {"Indian", "indian", "This looks Indian.", "It is from India"},
        {"Indian", "India", "Chinese", "indian"},
        {"Indian", "Hindi", "Chinese", "I can't tell"},
        {"Indian", "India.", "indian", "__error__"},
    };
    const std::vector<std::vector<std::string>> wrong{
        {"Indian", "India", "Chinese", "chinese"},
        {"Arab", "Arabic", "Middle Eastern", "Indian"},
        {"not sure", "hard to say", "unknown", "no idea"},
        {"Fijian", "Fiji", "Fijian", "Chinese"},
    };
    std::vector<VqaAnswer> answers;
    const auto emit_set = [&](const std::string& model, const std::string& concept_id, const std::string& pt, const std::string& lang,
                              const std::vector<std::string>& pattern) {
        for (int k = 0; k < 4; ++k) {
            answers.push_back({model, concept_id, pt, lang, k, QuestionId{}, pattern[static_cast<std::size_t>(k)], "blip2"});
        }
    };
    for (const auto& [model, n_correct] : models) {
        Rng rng(fnv1a64(model));
        std::vector<bool> is_correct(100, false);
        std::fill(is_correct.begin(), is_correct.begin() + n_correct, true);
        for (std::size_t i = is_correct.size() - 1; i > 0; --i) {
            const std::size_t j = rng.uniform_index(i + 1);
            const bool t = is_correct[i];
            is_correct[i] = is_correct[j];
            is_correct[j] = t;
        }
        for (std::size_t s = 0; s < 100; ++s) {
            const auto& bank = is_correct[s] ? correct : wrong;
            emit_set(model, concepts[s / pts.size()], pts[s % pts.size()], "HI", bank[rng.uniform_index(bank.size())]);
        }
    }
    // A small EN block for the same source, which must not leak into HI.
    for (std::size_t s = 0; s < 10; ++s) {
        const std::vector<std::string> ok{"American", "USA", "an American street", "British"};
        const std::vector<std::string> bad{"British", "UK", "American", "England"};
        emit_set("model-a", concepts[s], "english_reference", "EN", s < 7 ? ok : bad);
    }
    write_file_atomic(path, answers_to_jsonl(answers));
}

void write_xdp_answers(const Registry& registry, const fs::path& path) {
    Rng rng(77);
    std::vector<VqaAnswer> answers;
    const std::vector<std::string> fillers{"I can't tell", "both", "neither really"};
    for (const auto& l : registry.languages()) {
        for (const auto& d : registry.dimensions()) {
            // Each language gets a lean per dimension; answers follow it noisily.
            const double lean = rng.uniform01();
            for (const std::string pt : {"english_reference", "fully_translated"}) {
                for (const std::string c : {"car", "teacher"}) {
                    for (int k = 0; k < 4; ++k) {
                        const double u = rng.uniform01();
                        std::string ans;
                        if (u < 0.1) {
                            ans = fillers[rng.uniform_index(fillers.size())];
                        } else {
                            const auto& pole = rng.uniform01() < lean ? d.pole_positive : d.pole_negative;
                            ans = rng.uniform01() < 0.5 ? pole.adjective : "It looks " + pole.adjective + ".";
                        }
                        answers.push_back({"model-a", c, pt, l.code, k, QuestionId{QuestionType::Xdp, d.id}, ans, "blip2"});
                    }
                }
            }
        }
    }
    write_file_atomic(path, answers_to_jsonl(answers));
}

// 125 items, three annotators; the automatic labels agree with the human
// majority on 87 items (69.6%).
void write_annotations(const fs::path& csv_path, const fs::path& auto_path) {
    Rng rng(4242);
    const std::vector<std::string> labels{"Hindi", "Chinese", "American", "CantTell"};
    std::string csv = "item_id,annotator_id,question_id,label\n";
    std::string auto_jsonl;
    std::vector<std::string> majority;
    std::vector<std::string> items;
    for (int i = 0; i < 125; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "item-%03d", i);
        items.emplace_back(id);
        // A true label most annotators pick.
        const std::string truth = labels[rng.uniform_index(3)];
        std::map<std::string, int> counts;
        for (const std::string a : {"ann1", "ann2", "ann3"}) {
            const std::string label = rng.uniform01() < 0.75 ? truth : labels[rng.uniform_index(labels.size())];
            ++counts[label];
            csv += std::string(id) + "," + a + ",xna," + label + "\n";
        }
        std::string top = std::string(kCantTell);
        int best = 0;
        bool tie = false;
        for (const auto& [l, n] : counts) {
            if (n > best) {
                best = n, top = l, tie = false;
            } else if (n == best) {
                tie = true;
            }
        }
        majority.push_back(tie ? std::string(kCantTell) : top);
    }
    std::vector<bool> agree(125, false);
    std::fill(agree.begin(), agree.begin() + 87, true);
    for (std::size_t i = agree.size() - 1; i > 0; --i) {
        const std::size_t j = rng.uniform_index(i + 1);
        const bool t = agree[i];
        agree[i] = agree[j];
        agree[j] = t;
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::string label = majority[i];
        if (!agree[i]) label = label == "Arab" ? "Greek" : "Arab";
        ojson j{{"item_id", items[i]}, {"question_id", "xna"}, {"label", label}};
        auto_jsonl += j.dump() + "\n";
    }
    // A second question without automatic labels, two poles only.
    for (int i = 0; i < 40; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "img-%03d", i);
        const bool modern = rng.uniform01() < 0.6;
        for (const std::string a : {"ann1", "ann2", "ann3"}) {
            const bool pick = rng.uniform01() < 0.8 ? modern : !modern;
            csv += std::string(id) + "," + a + ",xdp:modern_ancient," + (pick ? "Modern" : "Ancient") + "\n";
        }
    }
    write_file_atomic(csv_path, csv);
    write_file_atomic(auto_path, auto_jsonl);
}

void write_json(const fs::path& path, const ojson& j) { write_file_atomic(path, j.dump(1) + "\n"); }

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: make_fixtures <out_dir>\n");
        return 2;
    }
    try {
        const fs::path out = argv[1];
        fs::create_directories(out);
        const Registry& registry = Registry::bundled();
        write_archive(registry, out / "archive");
        write_xna_answers(registry, out / "answers_xna.jsonl");
        write_xdp_answers(registry, out / "answers_xdp.jsonl");
        write_annotations(out / "annotations.csv", out / "auto_labels.jsonl");
        write_json(out / "model_sd.json",
                   ojson{{"model_id", "sd"}, {"languages", "all"}, {"template_kinds", "all"}, {"concepts", "all"}, {"k", 4}, {"base_seed", 42}});
        write_json(out / "model_small.json", ojson{{"model_id", "toy-diffusion"},
                                                   {"languages", {"EN", "ES", "HI", "ZH"}},
                                                   {"template_kinds", {"english_reference", "fully_translated", "english_with_nation"}},
                                                   {"concepts", {"car", "bicycle", "train", "teacher"}},
                                                   {"k", 4},
                                                   {"base_seed", 42}});
        write_json(out / "run.json", ojson{{"archives", {"archive"}},
                                           {"answers", {"answers_xna.jsonl", "answers_xdp.jsonl"}},
                                           {"model_configs", {"model_small.json"}},
                                           {"annotations", "annotations.csv"},
                                           {"auto_labels", "auto_labels.jsonl"},
                                           {"output_dir", "out"},
                                           {"order", "primary"}});
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
