#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cultprobe/embedding_store.hpp"
#include "cultprobe/extrinsic.hpp"
#include "cultprobe/human_eval.hpp"
#include "cultprobe/ontology.hpp"
#include "cultprobe/prompt_engine.hpp"

namespace cultprobe {

inline constexpr std::string_view kToolVersion = "1.0.0";

struct OutputFile {
    std::string path;  // relative to the output directory
    std::string content;
};

struct MetricOutput {
    std::string metric;
    std::vector<OutputFile> files;
    nlohmann::ordered_json summary;  // full precision
};

struct MetricOptions {
    NationalityOrder order = NationalityOrder::Primary;
    bool normalize = true;
    // Restricts XNA to these templates; empty means all.
    std::vector<std::string> xna_pts;
    // Restricts XDP to these dimensions; empty means every dimension answered.
    std::vector<std::string> xdp_dimensions;
    std::optional<std::size_t> annotators_per_item;
};

// Text baselines the store-based metrics look up by prompt text:
//   NA        "a photo with <nationality lowercased> style"
//   DP        "a photo with <pole aspect> aspects"
//   CD        "a photo of <concept>"
//   coverage  the concept's English term
// CCS reads visual-baseline rows; coverage reads description rows.
MetricOutput run_prompts(const Registry& registry, const ModelConfig& config);
MetricOutput run_na(const Registry& registry, const EmbeddingStore& store, const MetricOptions& options);
MetricOutput run_dp(const Registry& registry, const EmbeddingStore& store, const MetricOptions& options);
MetricOutput run_cd(const Registry& registry, const EmbeddingStore& store, const MetricOptions& options);
MetricOutput run_ccs(const Registry& registry, const EmbeddingStore& store, const MetricOptions& options);
MetricOutput run_coverage(const Registry& registry, const EmbeddingStore& store, const MetricOptions& options);
MetricOutput run_xna(const Registry& registry, const std::vector<VqaAnswer>& answers, const MetricOptions& options);
MetricOutput run_xdp(const Registry& registry, const std::vector<VqaAnswer>& answers, const MetricOptions& options);
MetricOutput run_humaneval(const std::vector<Annotation>& annotations, const std::map<std::string, std::map<std::string, std::string>>& auto_labels,
                           const MetricOptions& options);

// Writes every file below out_dir atomically and returns their relative paths.
std::vector<std::string> write_outputs(const std::filesystem::path& out_dir, const MetricOutput& output);

// ---------------------------------------------------------------------------
// Whole runs
// ---------------------------------------------------------------------------

inline constexpr std::string_view kAllStages[] = {"prompts", "ingest", "metrics", "reports"};
inline constexpr std::string_view kAllMetrics[] = {"na", "dp", "cd", "ccs", "coverage", "xna", "xdp", "humaneval"};

// Paths are resolved against base_dir (the config file's directory) but kept
// as written in the snapshot.
struct RunConfig {
    std::optional<std::string> registry;
    std::vector<std::string> archives;
    std::vector<std::string> answers;
    std::vector<std::string> model_configs;
    std::optional<std::string> annotations;
    std::optional<std::string> auto_labels;
    std::string output_dir;
    std::vector<std::string> stages{"prompts", "ingest", "metrics", "reports"};
    std::vector<std::string> metrics;  // empty: every metric whose inputs are configured
    MetricOptions options;
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const std::string& p) const;
    // Everything except output_dir and base_dir, so records of the same
    // inputs are identical wherever they are written.
    nlohmann::ordered_json snapshot() const;
};

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig read_run_config(const std::filesystem::path& path);

// Checks stage and metric names, input paths and the output directory.
// Throws naming the first problem; writes nothing.
void validate_run_config(const RunConfig& config);

struct RunRecord {
    nlohmann::ordered_json config;
    std::string tool_version;
    std::string registry_version;
    double wall_seconds = 0.0;  // reported, not persisted
    std::map<std::string, std::vector<std::string>> files;  // stage or metric -> files

    // The persisted form, without wall time.
    nlohmann::ordered_json to_json() const;
};

// Runs prompts -> ingest -> metrics -> reports. A failing stage aborts with
// its name; run_record.json then carries status "failed" and the files
// written so far.
RunRecord run(const RunConfig& config);

}  // namespace cultprobe
