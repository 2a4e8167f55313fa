#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sv/harness.hpp"

using namespace sv;

namespace {

/* Every value-carrying flag keeps its CLI::Option* so build_config can tell
 * "flag given" from "default value"; precedence is flag > file > default. */
struct Flags {
    std::string config_file;

    std::uint64_t seed = 0;
    int max_tokens = 0;
    int draft_len = 0;
    float temperature = 0.0f;
    std::string draft_mode;
    float adversarial_delta = 0.0f;
    std::vector<int> tree;
    std::string prompts_file;
    std::vector<int> prompt;
    std::string target_weights;
    std::string draft_weights;
    int k_anchor = 0;
    double lossless_threshold = 0.0;
    std::string anchors_out;
    std::string thresholds_out;

    double rho = 0.0;
    int L0 = 0;
    int sink_blocks = 0;
    int local_blocks = 0;
    bool max_aggregation = false;
    std::string anchors;
    float tau = 0.0f;
    std::string thresholds;
    int m = 0;
    bool renormalize = false;

    CLI::Option* seed_o = nullptr;
    CLI::Option* max_tokens_o = nullptr;
    CLI::Option* draft_len_o = nullptr;
    CLI::Option* temperature_o = nullptr;
    CLI::Option* draft_mode_o = nullptr;
    CLI::Option* adversarial_delta_o = nullptr;
    CLI::Option* tree_o = nullptr;
    CLI::Option* prompts_o = nullptr;
    CLI::Option* prompt_o = nullptr;
    CLI::Option* target_weights_o = nullptr;
    CLI::Option* draft_weights_o = nullptr;
    CLI::Option* k_anchor_o = nullptr;
    CLI::Option* lossless_threshold_o = nullptr;
    CLI::Option* anchors_out_o = nullptr;
    CLI::Option* thresholds_out_o = nullptr;

    CLI::Option* rho_o = nullptr;
    CLI::Option* L0_o = nullptr;
    CLI::Option* sink_o = nullptr;
    CLI::Option* local_o = nullptr;
    CLI::Option* max_agg_o = nullptr;
    CLI::Option* anchors_o = nullptr;
    CLI::Option* tau_o = nullptr;
    CLI::Option* thresholds_o = nullptr;
    CLI::Option* m_o = nullptr;
    CLI::Option* renorm_o = nullptr;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_file, "experiment JSON file");
    f.seed_o = cmd->add_option("--seed", f.seed, "base RNG seed");
    f.max_tokens_o = cmd->add_option("--max-tokens", f.max_tokens, "tokens to generate");
    f.draft_len_o = cmd->add_option("--draft-len", f.draft_len, "chain draft length K");
    f.temperature_o = cmd->add_option("--temperature", f.temperature,
                                      "sampling temperature (<= 0 = greedy)");
    f.draft_mode_o =
        cmd->add_option("--draft-mode", f.draft_mode, "model|self|adversarial");
    f.adversarial_delta_o = cmd->add_option("--adversarial-delta", f.adversarial_delta,
                                            "uniform mass of the adversarial draft");
    f.tree_o = cmd->add_option("--tree", f.tree,
                               "tree template branching factors (e.g. --tree 2 2)");
    f.prompts_o = cmd->add_option("--prompts", f.prompts_file,
                                  "prompt file, one token-id sequence per line");
    f.prompt_o = cmd->add_option("--prompt", f.prompt, "inline prompt token ids");
    f.target_weights_o =
        cmd->add_option("--target-weights", f.target_weights, "target weight file");
    f.draft_weights_o =
        cmd->add_option("--draft-weights", f.draft_weights, "draft weight file");
    f.k_anchor_o = cmd->add_option("--k-anchor", f.k_anchor,
                                   "anchor layer count (0 = every layer)");
    f.lossless_threshold_o = cmd->add_option("--lossless-threshold",
                                             f.lossless_threshold, "TV pass threshold");
    f.anchors_out_o = cmd->add_option("--anchors-out", f.anchors_out,
                                      "calibrate: anchor file to write");
    f.thresholds_out_o = cmd->add_option("--thresholds-out", f.thresholds_out,
                                         "calibrate: threshold file to write");

    f.rho_o = cmd->add_option("--rho", f.rho, "attention retention coefficient");
    f.L0_o = cmd->add_option("--L0", f.L0, "attention base length");
    f.sink_o = cmd->add_option("--sink-blocks", f.sink_blocks, "always-kept leading blocks");
    f.local_o = cmd->add_option("--local-blocks", f.local_blocks, "always-kept trailing blocks");
    f.max_agg_o = cmd->add_flag("--max-aggregation", f.max_aggregation,
                                "aggregate GQA block scores by max instead of mean");
    f.anchors_o = cmd->add_option("--anchors", f.anchors, "anchor file to apply");
    f.tau_o = cmd->add_option("--tau", f.tau, "FFN channel threshold");
    f.thresholds_o = cmd->add_option("--thresholds", f.thresholds, "MoE threshold file to apply");
    f.m_o = cmd->add_option("--m", f.m, "MoE skip budget");
    f.renorm_o = cmd->add_flag("--renormalize", f.renormalize,
                               "renormalize kept expert weights");
}

ExperimentConfig build_config(const Flags& f) {
    ExperimentConfig cfg;
    if (!f.config_file.empty())
        cfg = ExperimentConfig::from_json(load_json(f.config_file));
    if (f.seed_o->count()) cfg.seed = f.seed;
    if (f.max_tokens_o->count()) cfg.max_tokens = f.max_tokens;
    if (f.draft_len_o->count()) cfg.draft_len = f.draft_len;
    if (f.temperature_o->count()) cfg.temperature = f.temperature;
    if (f.draft_mode_o->count()) {
        if (f.draft_mode == "model") cfg.draft_mode = DraftMode::model;
        else if (f.draft_mode == "self") cfg.draft_mode = DraftMode::self_draft;
        else if (f.draft_mode == "adversarial") cfg.draft_mode = DraftMode::adversarial;
        else throw ConfigError("draft_mode must be model|self|adversarial, got '" +
                               f.draft_mode + "'");
    }
    if (f.adversarial_delta_o->count()) cfg.adversarial_delta = f.adversarial_delta;
    if (f.tree_o->count()) cfg.tree_template = f.tree;
    if (f.prompts_o->count()) cfg.prompts_file = f.prompts_file;
    if (f.prompt_o->count()) cfg.inline_prompt = f.prompt;
    if (f.target_weights_o->count()) cfg.target.weights_file = f.target_weights;
    if (f.draft_weights_o->count()) cfg.draft.weights_file = f.draft_weights;
    if (f.k_anchor_o->count()) cfg.k_anchor = f.k_anchor;
    if (f.lossless_threshold_o->count()) cfg.lossless_threshold = f.lossless_threshold;
    if (f.anchors_out_o->count()) cfg.anchors_out = f.anchors_out;
    if (f.thresholds_out_o->count()) cfg.thresholds_out = f.thresholds_out;

    if (f.rho_o->count()) cfg.plan.rho = f.rho;
    if (f.L0_o->count()) cfg.plan.base_length = f.L0;
    if (f.sink_o->count()) cfg.plan.sink_blocks = f.sink_blocks;
    if (f.local_o->count()) cfg.plan.local_blocks = f.local_blocks;
    if (f.max_agg_o->count()) cfg.plan.max_aggregation = f.max_aggregation;
    if (f.anchors_o->count()) cfg.plan.anchors_file = f.anchors;
    if (f.tau_o->count()) cfg.plan.tau = f.tau;
    if (f.thresholds_o->count()) cfg.plan.thresholds_file = f.thresholds;
    if (f.m_o->count()) cfg.plan.budget_m = f.m;
    if (f.renorm_o->count()) cfg.plan.renormalize = f.renormalize;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy speculative-decoding harness with sparse verification"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand(
        "generate", "decode every prompt, one metrics JSON line per prompt");
    Flags fg;
    add_common(gen, fg);

    auto* cal = app.add_subcommand(
        "calibrate", "build anchor / expert-threshold files from calibration prompts");
    Flags fc;
    add_common(cal, fc);
    std::string mode = "both";
    cal->add_option("--mode", mode, "anchors|moe|both")->capture_default_str();

    auto* ovl = app.add_subcommand(
        "overlap", "mean retrieval-mask overlap by positional distance, CSV");
    Flags fo;
    add_common(ovl, fo);
    int max_distance = 8;
    ovl->add_option("--max-distance", max_distance, "largest position distance bucketed")
        ->capture_default_str();

    auto* los = app.add_subcommand(
        "lossless", "first-emitted-token distribution vs the exact target softmax");
    Flags fl;
    add_common(los, fl);
    long long trials = 200000;
    los->add_option("--trials", trials, "independent single-step decodes")
        ->capture_default_str();

    auto* ben = app.add_subcommand("bench", "decode once per plan variant, CSV");
    Flags fb;
    add_common(ben, fb);

    auto* flp =
        app.add_subcommand("flops", "analytical cost rows, dense vs sparse, CSV");
    std::string flops_config;
    long long tokens = 1;
    double s_a = 0.0, s_f = 0.0, s_e = 0.0;
    flp->add_option("--config", flops_config,
                    "experiment JSON supplying the target model dimensions");
    flp->add_option("--tokens", tokens, "tokens T")->capture_default_str();
    flp->add_option("--s-a", s_a, "attention sparsity")->capture_default_str();
    flp->add_option("--s-f", s_f, "FFN sparsity")->capture_default_str();
    flp->add_option("--s-e", s_e, "expert sparsity")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            cmd_generate(build_config(fg), std::cout);
        } else if (cal->parsed()) {
            cmd_calibrate(build_config(fc), mode, std::cout, std::cerr);
        } else if (ovl->parsed()) {
            cmd_overlap(build_config(fo), max_distance, std::cout);
        } else if (los->parsed()) {
            const LosslessReport rep = cmd_lossless(build_config(fl), trials, std::cout);
            return rep.pass ? 0 : 2;
        } else if (ben->parsed()) {
            cmd_bench(build_config(fb), std::cout);
        } else if (flp->parsed()) {
            ModelConfig mc;
            if (!flops_config.empty())
                mc = ExperimentConfig::from_json(load_json(flops_config)).target.config;
            cmd_flops(mc, tokens, s_a, s_f, s_e, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
