// cultprobe: command-line front end for the cultural-bias evaluation toolkit.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cultprobe/embedding_store.hpp"
#include "cultprobe/error.hpp"
#include "cultprobe/extrinsic.hpp"
#include "cultprobe/human_eval.hpp"
#include "cultprobe/ontology.hpp"
#include "cultprobe/pipeline.hpp"
#include "cultprobe/prompt_engine.hpp"
#include "cultprobe/prompt_optimizer.hpp"
#include "cultprobe/util.hpp"

using namespace cultprobe;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Globals {
    std::string registry;
    bool dry_run = false;
};

Registry registry_of(const Globals& g) { return load_ontology(g.registry.empty() ? std::nullopt : std::optional<fs::path>(g.registry)); }

EmbeddingStore load_archives(const std::vector<std::string>& dirs) {
    std::vector<EmbeddingStore> parts;
    for (const auto& d : dirs) parts.push_back(ingest_archive(d));
    return EmbeddingStore::merge(parts);
}

std::vector<VqaAnswer> load_answers(const std::vector<std::string>& files, const Registry& registry, std::size_t* excluded) {
    std::vector<VqaAnswer> out;
    for (const auto& f : files) {
        AnswerFile a = read_answers(f, &registry);
        if (excluded) *excluded += a.excluded_errors;
        out.insert(out.end(), std::make_move_iterator(a.answers.begin()), std::make_move_iterator(a.answers.end()));
    }
    return out;
}

// Writes a metric's files under out, or prints its summary when out is empty.
void emit(const MetricOutput& result, const std::string& out, bool dry_run) {
    if (dry_run) {
        std::printf("dry run: %s would write %zu files\n", result.metric.c_str(), result.files.size() + 1);
        for (const auto& f : result.files) std::printf("  %s\n", f.path.c_str());
        return;
    }
    if (out.empty()) {
        std::cout << result.summary.dump(1) << "\n";
        return;
    }
    for (const auto& p : write_outputs(out, result)) std::printf("wrote %s\n", (fs::path(out) / p).c_str());
}

std::vector<std::string> split_command(const std::string& cmd) {
    auto parts = split_whitespace(cmd);
    if (parts.empty()) throw Error("empty encoder command");
    return parts;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cultural bias probes for text-to-image models"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--registry", g.registry, "Registry JSON (default: $CULTPROBE_REGISTRY, then the bundled registry)");

    const auto dry = [&](CLI::App* sub) { sub->add_flag("--dry-run", g.dry_run, "Validate inputs and report what would be written"); };

    // prompts
    std::string model_config, manifest_out;
    auto* prompts = app.add_subcommand("prompts", "Enumerate the generation manifest of a model config");
    prompts->add_option("--model-config", model_config)->required()->check(CLI::ExistingFile);
    prompts->add_option("--out", manifest_out, "Manifest JSONL (default: stdout)");
    dry(prompts);

    // ingest
    std::string ingest_dir;
    auto* ingest = app.add_subcommand("ingest", "Validate an embedding archive and print a summary");
    ingest->add_option("dir", ingest_dir)->required();
    dry(ingest);

    // store metrics
    std::vector<std::string> archives;
    std::string out_dir, order = "primary";
    bool no_normalize = false;
    std::map<std::string, CLI::App*> store_cmds;
    for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
             {"na", "National association and confusion matrices"},
             {"dp", "Dimension projections and the culture map"},
             {"cd", "Cultural distance to the English reference"},
             {"ccs", "Cross-cultural similarity matrices"},
             {"coverage", "Conceptual coverage of image descriptions"}}) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--archive", archives, "Embedding archive directory (repeatable)")->required();
        sub->add_option("--out", out_dir, "Output directory (default: print the summary)");
        sub->add_option("--order", order)->check(CLI::IsMember({"primary", "extended"}));
        sub->add_flag("--no-normalize", no_normalize, "Skip min-max normalization");
        dry(sub);
        store_cmds[name] = sub;
    }

    // extrinsic
    std::vector<std::string> answer_files, pts, dimensions;
    auto* xna = app.add_subcommand("xna", "Extrinsic national association from VQA answers");
    xna->add_option("--answers", answer_files)->required();
    xna->add_option("--order", order)->check(CLI::IsMember({"primary", "extended"}));
    xna->add_option("--pt", pts, "Restrict to templates (repeatable)");
    xna->add_option("--out", out_dir);
    dry(xna);
    auto* xdp = app.add_subcommand("xdp", "Extrinsic dimension projection from VQA answers");
    xdp->add_option("--answers", answer_files)->required();
    xdp->add_option("--dimension", dimensions, "Dimension id (repeatable; default every answered one)");
    xdp->add_option("--out", out_dir);
    dry(xdp);

    // humaneval
    std::string annotations, auto_labels;
    std::optional<std::size_t> annotators;
    auto* humaneval = app.add_subcommand("humaneval", "Fleiss kappa and agreement with automatic labels");
    humaneval->add_option("--annotations", annotations)->required()->check(CLI::ExistingFile);
    humaneval->add_option("--auto", auto_labels, "Automatic labels JSONL")->check(CLI::ExistingFile);
    humaneval->add_option("--annotators", annotators, "Required annotators per item");
    humaneval->add_option("--out", out_dir);
    dry(humaneval);

    // optimize
    std::string objective, lang, mode = "letters", encoder_kind = "toy", encoder_cmd, vocab_file, prefix, projection = "euclidean", opt_out;
    std::vector<std::string> objective_archives;
    std::size_t T = 1, steps = 256, d_tok = 16, d_out = 32;
    double lr = 0.1;
    std::uint64_t seed = 0, toy_seed = 7;
    auto* optimize_cmd = app.add_subcommand("optimize", "Search gibberish tokens whose prompt embedding approaches an objective");
    optimize_cmd->add_option("--objective", objective,
                             "text:<prompt> (embedded by the encoder), key:<text baseline> (looked up in --archive) or a JSON file holding a vector")
        ->required();
    optimize_cmd->add_option("--archive", objective_archives, "Archive holding the objective row");
    optimize_cmd->add_option("--lang", lang, "Language whose alphabet filters the vocabulary")->required();
    optimize_cmd->add_option("--T", T, "Gibberish slots");
    optimize_cmd->add_option("--mode", mode)->check(CLI::IsMember({"letters", "tokens"}));
    optimize_cmd->add_option("--encoder", encoder_kind)->check(CLI::IsMember({"toy", "external"}));
    optimize_cmd->add_option("--encoder-cmd", encoder_cmd, "Command of the gradient server (external encoder)");
    optimize_cmd->add_option("--vocab", vocab_file, "Vocabulary JSON (default: the toy vocabulary)");
    optimize_cmd->add_option("--token-dim", d_tok, "Token embedding width");
    optimize_cmd->add_option("--output-dim", d_out, "Encoder output width");
    optimize_cmd->add_option("--toy-seed", toy_seed, "Seed of the toy vocabulary and encoder");
    optimize_cmd->add_option("--prefix", prefix, "Frozen prompt prefix, e.g. \"a photo of food\"");
    optimize_cmd->add_option("--steps", steps);
    optimize_cmd->add_option("--lr", lr);
    optimize_cmd->add_option("--seed", seed);
    optimize_cmd->add_option("--projection", projection)->check(CLI::IsMember({"euclidean", "cosine"}));
    optimize_cmd->add_option("--out", opt_out, "Result JSON (default: stdout)");
    dry(optimize_cmd);

    // report
    std::string config_path;
    std::vector<std::string> stages, metrics;
    std::string r_output, r_order, r_annotations, r_auto;
    std::vector<std::string> r_archives, r_answers, r_models, r_pts, r_dims;
    bool r_no_normalize = false;
    auto* report = app.add_subcommand("report", "Run the stage pipeline from a config file");
    report->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
    report->add_option("--output-dir", r_output);
    report->add_option("--stage", stages, "Stages to run (repeatable)");
    report->add_option("--metric", metrics, "Metrics to run (repeatable)");
    report->add_option("--archive", r_archives);
    report->add_option("--answers", r_answers);
    report->add_option("--model-config", r_models);
    report->add_option("--annotations", r_annotations);
    report->add_option("--auto", r_auto);
    report->add_option("--order", r_order)->check(CLI::IsMember({"primary", "extended"}));
    report->add_option("--pt", r_pts);
    report->add_option("--dimension", r_dims);
    report->add_flag("--no-normalize", r_no_normalize);
    dry(report);

    // registry
    std::string registry_out;
    auto* registry_cmd = app.add_subcommand("registry", "Registry utilities");
    registry_cmd->require_subcommand(1);
    auto* registry_export = registry_cmd->add_subcommand("export", "Write the active registry as JSON");
    registry_export->add_option("--out", registry_out, "Output file (default: stdout)");
    dry(registry_export);

    CLI11_PARSE(app, argc, argv);

    const auto started = std::chrono::steady_clock::now();
    try {
        MetricOptions options;
        options.order = parse_nationality_order(order);
        options.normalize = !no_normalize;

        if (*prompts) {
            const Registry registry = registry_of(g);
            const MetricOutput result = run_prompts(registry, read_model_config(model_config, registry));
            std::fprintf(stderr, "%zu manifest entries\n", result.summary["entries"].get<std::size_t>());
            if (g.dry_run) {
                std::printf("dry run: manifest valid\n");
            } else if (manifest_out.empty()) {
                std::cout << result.files.front().content;
            } else {
                write_file_atomic(manifest_out, result.files.front().content);
            }
        }
        if (*ingest) {
            const EmbeddingStore store = ingest_archive(ingest_dir);
            std::map<std::string, std::size_t> roles;
            for (const auto& k : store.keys()) ++roles[std::string(to_string(k.role))];
            std::printf("archive %s: %zu rows, dim %zu, max |norm - 1| %s\n", ingest_dir.c_str(), store.size(), store.dim(),
                        format_sig6(store.max_norm_deviation()).c_str());
            for (const auto& [role, n] : roles) std::printf("  %s: %zu\n", role.c_str(), n);
            std::printf("  image sets: %zu\n", store.sets(EmbeddingRole::Image).size());
        }
        for (const auto& [name, sub] : store_cmds) {
            if (!*sub) continue;
            const Registry registry = registry_of(g);
            const EmbeddingStore store = load_archives(archives);
            MetricOutput result;
            if (name == "na") result = run_na(registry, store, options);
            if (name == "dp") result = run_dp(registry, store, options);
            if (name == "cd") result = run_cd(registry, store, options);
            if (name == "ccs") result = run_ccs(registry, store, options);
            if (name == "coverage") result = run_coverage(registry, store, options);
            emit(result, out_dir, g.dry_run);
        }
        if (*xna || *xdp) {
            const Registry registry = registry_of(g);
            std::size_t excluded = 0;
            const auto answers = load_answers(answer_files, registry, &excluded);
            if (excluded > 0) std::fprintf(stderr, "excluded %zu error answers\n", excluded);
            options.xna_pts = pts;
            options.xdp_dimensions = dimensions;
            emit(*xna ? run_xna(registry, answers, options) : run_xdp(registry, answers, options), out_dir, g.dry_run);
        }
        if (*humaneval) {
            options.annotators_per_item = annotators;
            std::map<std::string, std::map<std::string, std::string>> labels;
            if (!auto_labels.empty()) labels = parse_auto_labels(read_file(auto_labels));
            emit(run_humaneval(parse_annotations_csv(read_file(annotations)), labels, options), out_dir, g.dry_run);
        }
        if (*optimize_cmd) {
            const Registry registry = registry_of(g);
            const TokenVocabulary vocab = vocab_file.empty() ? toy_vocabulary(registry, d_tok, toy_seed) : parse_vocabulary_json(read_file(vocab_file));
            std::unique_ptr<TextEncoder> encoder;
            if (encoder_kind == "toy") {
                encoder = std::make_unique<ToyEncoder>(vocab.dim(), d_out, toy_seed);
            } else {
                if (encoder_cmd.empty()) throw Error("--encoder external needs --encoder-cmd");
                encoder = std::make_unique<ExternalEncoder>(split_command(encoder_cmd), vocab.dim(), d_out);
            }
            std::vector<double> target;
            if (objective.rfind("text:", 0) == 0) {
                const auto ids = tokenize_words(vocab, objective.substr(5));
                target = encoder->embed(ids, token_rows(vocab, ids));
            } else if (objective.rfind("key:", 0) == 0) {
                if (objective_archives.empty()) throw Error("--objective key:... needs --archive");
                const EmbeddingStore store = load_archives(objective_archives);
                const auto row = store.row(store.text_row(objective.substr(4)));
                target.assign(row.begin(), row.end());
            } else {
                target = nlohmann::json::parse(read_file(objective)).get<std::vector<double>>();
            }
            OptimizationConfig cfg;
            cfg.T = T;
            cfg.steps = steps;
            cfg.learning_rate = lr;
            cfg.rng_seed = seed;
            cfg.mode = parse_slot_mode(mode);
            cfg.projection = projection == "cosine" ? Projection::Cosine : Projection::Euclidean;
            if (!prefix.empty()) {
                cfg.prefix_tokens = tokenize_words(vocab, prefix);
                cfg.prefix_rows = token_rows(vocab, cfg.prefix_tokens);
            }
            const TokenVocabulary filtered = filter_vocab(vocab, registry.language(lang));
            if (g.dry_run) {
                std::printf("dry run: objective dim %zu, %zu candidate tokens for %s\n", target.size(), filtered.size(), lang.c_str());
            } else {
                const auto result = optimize(make_objective(ObjectiveKind::Textual, target), *encoder, filtered, cfg);
                ojson j;
                j["lang"] = lang;
                j["T"] = T;
                j["mode"] = mode;
                j["tokens"] = result.gibberish_tokens;
                j["token_ids"] = result.token_ids;
                j["final_loss"] = result.final_loss;
                j["final_cosine"] = -result.final_loss;
                j["loss_trace"] = result.loss_trace;
                const std::string text = j.dump(1) + "\n";
                if (opt_out.empty()) {
                    std::cout << text;
                } else {
                    write_file_atomic(opt_out, text);
                }
            }
        }
        if (*report) {
            RunConfig config = config_path.empty() ? RunConfig{} : read_run_config(config_path);
            if (config_path.empty()) config.base_dir = fs::current_path();
            // Flag values are relative to the working directory, not the config.
            const auto abs = [](const std::string& p) { return fs::absolute(p).string(); };
            const auto abs_all = [&](const std::vector<std::string>& v) {
                std::vector<std::string> out;
                for (const auto& p : v) out.push_back(abs(p));
                return out;
            };
            if (!g.registry.empty()) config.registry = abs(g.registry);
            if (!r_output.empty()) config.output_dir = abs(r_output);
            if (!stages.empty()) config.stages = stages;
            if (!metrics.empty()) config.metrics = metrics;
            if (!r_archives.empty()) config.archives = abs_all(r_archives);
            if (!r_answers.empty()) config.answers = abs_all(r_answers);
            if (!r_models.empty()) config.model_configs = abs_all(r_models);
            if (!r_annotations.empty()) config.annotations = abs(r_annotations);
            if (!r_auto.empty()) config.auto_labels = abs(r_auto);
            if (!r_order.empty()) config.options.order = parse_nationality_order(r_order);
            if (!r_pts.empty()) config.options.xna_pts = r_pts;
            if (!r_dims.empty()) config.options.xdp_dimensions = r_dims;
            if (r_no_normalize) config.options.normalize = false;
            if (g.dry_run) {
                validate_run_config(config);
                std::printf("dry run: config valid, output to %s\n", config.resolve(config.output_dir).c_str());
            } else {
                const RunRecord record = run(config);
                std::size_t n = 0;
                for (const auto& [_, files] : record.files) n += files.size();
                std::printf("run ok: %zu files in %s (registry %s)\n", n, config.resolve(config.output_dir).c_str(), record.registry_version.c_str());
            }
        }
        if (*registry_export) {
            const Registry registry = registry_of(g);
            const std::string text = registry.to_json();
            if (g.dry_run) {
                std::printf("dry run: registry %s valid, %zu concepts\n", registry.version().c_str(), registry.concepts().size());
            } else if (registry_out.empty()) {
                std::cout << text;
            } else {
                write_file_atomic(registry_out, text);
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::fprintf(stderr, "wall time %.3f s\n", secs);
    return 0;
}
