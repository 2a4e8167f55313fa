#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sv/io.hpp"
#include "sv/model.hpp"
#include "sv/plan.hpp"
#include "sv/specdec.hpp"

namespace sv {

enum class DraftMode { model, self_draft, adversarial };

/* Weights come from a file when one is named, otherwise from seeded
 * initialization of `config`. */
struct ModelSource {
    ModelConfig config;
    std::string weights_file;
    std::uint64_t init_seed = 7;

    std::shared_ptr<const Weights> load() const;
};

/* JSON-facing sparsity knobs; resolved against the model geometry. A
 * dimension is active only when its switch field is present (rho for
 * attention, tau for the FFN, a threshold file for MoE). */
struct PlanSpec {
    std::optional<double> rho;
    int base_length = 128;
    int sink_blocks = 1;
    int local_blocks = 1;
    bool max_aggregation = false;
    std::string anchors_file;
    std::optional<float> tau;
    std::string thresholds_file;
    int budget_m = 0;
    bool renormalize = false;

    SparsityPlan resolve(const ModelConfig& cfg) const;
    nlohmann::json to_json() const;
    static PlanSpec from_json(const nlohmann::json& j);
};

struct BenchVariant {
    std::string name;
    PlanSpec plan;
};

struct ExperimentConfig {
    ModelSource target;
    ModelSource draft;
    DraftMode draft_mode = DraftMode::self_draft;
    float adversarial_delta = 0.01f;
    int draft_len = 3;
    std::vector<int> tree_template; // non-empty switches to tree proposal
    float temperature = 1.0f;
    std::uint64_t seed = 0;
    int max_tokens = 32;
    std::string prompts_file;
    std::vector<int> inline_prompt;
    PlanSpec plan;
    int k_anchor = 0; // 0 = one anchor per layer (reuse disabled)
    double lossless_threshold = 0.01;
    std::string anchors_out = "anchors.json";
    std::string thresholds_out = "thresholds.json";
    std::vector<BenchVariant> variants;

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    std::vector<std::vector<int>> prompts() const;
    /* fnv1a over the canonical dump; embedded in every metrics record */
    std::uint64_t config_hash() const;
    DecodeConfig decode_config() const;
    std::unique_ptr<DraftSource> make_draft(
        std::shared_ptr<const Weights> target_w,
        std::shared_ptr<const Weights> draft_w) const;
};

/* Worker cap: min(jobs, SPECVERIFY_THREADS or hardware threads). */
int worker_count(int jobs);

/* Runs fn(0..jobs-1) across workers; each worker disables the OpenMP kernel
 * paths so parallelism never nests. fn must write only to its own slot;
 * callers merge by index. */
void run_indexed(int jobs, const std::function<void(int)>& fn);

/* One metrics line: alpha, emitted, per-component FLOPs, measured
 * sparsities, seed, config hash, and the generated tokens. */
nlohmann::json decode_record(const DecodeResult& res, std::uint64_t seed,
                             std::uint64_t config_hash, int prompt_index);

/* generate: one decode per prompt line, one JSON record per line on out. */
void cmd_generate(const ExperimentConfig& cfg, std::ostream& out);

/* calibrate: mode anchors|moe|both. Writes cfg.anchors_out /
 * cfg.thresholds_out and prints per-layer summaries. Sequences too short
 * for retrieval warn on `warn`; only all-skipped is fatal. */
void cmd_calibrate(const ExperimentConfig& cfg, const std::string& mode,
                   std::ostream& out, std::ostream& warn);

/* overlap: per verification step computes every draft token's retrieval
 * mask independently, pairs tokens by positional distance (0 = siblings at
 * one position), and emits layer,distance,mean_overlap CSV. Needs a tree
 * template and active attention sparsity. */
void cmd_overlap(const ExperimentConfig& cfg, int max_distance, std::ostream& out);

struct LosslessReport {
    long long trials = 0;
    int vocab = 0;
    double tv = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

/* lossless: `trials` independent single-step decodes of the first prompt;
 * total-variation distance between the first-emitted-token histogram and
 * the exact target distribution. */
LosslessReport cmd_lossless(const ExperimentConfig& cfg, long long trials,
                            std::ostream& out);

/* bench: one decode per variant, same prompt and seed, CSV row per variant. */
void cmd_bench(const ExperimentConfig& cfg, std::ostream& out);

/* flops: the printed cost rows for the model's dimensions at the given
 * sparsities, dense vs sparse, CSV. */
void cmd_flops(const ModelConfig& cfg, long long tokens, double s_a, double s_f,
               double s_e, std::ostream& out);

} // namespace sv
