#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sv/draft_tree.hpp"
#include "sv/kernels.hpp"
#include "sv/kv_cache.hpp"
#include "sv/plan.hpp"
#include "sv/rng.hpp"
#include "sv/sparse_ffn.hpp"
#include "sv/sparse_moe.hpp"

namespace sv {

enum class LayerKind { dense, moe };

struct ModelConfig {
    int num_layers = 4;
    int hidden = 64;
    int ffn_hidden = 256;
    int num_query_heads = 4;
    int num_kv_heads = 2;
    int head_dim = 16; // hidden / num_query_heads
    int vocab = 256;
    std::vector<LayerKind> layer_kinds; // empty = all dense
    int num_experts = 4;
    int active_experts = 2;
    int expert_hidden = 128;
    int block_size = 16;
    float rope_base = 10000.0f;

    LayerKind kind(int layer) const {
        return layer_kinds.empty() ? LayerKind::dense : layer_kinds[layer];
    }
    bool has_moe() const;
    int kv_dim() const { return num_kv_heads * head_dim; }
    void validate() const;
};

struct LayerWeights {
    std::vector<float> attn_norm, ffn_norm; // gains, length d
    Matrix wq, wk, wv, wo;                  // (out, in) row-major
    FfnWeights ffn;                         // dense layers
    Matrix router;                          // (E, d), MoE layers
    std::vector<FfnWeights> experts;        // E bundles, MoE layers
};

struct Weights {
    ModelConfig config;
    Matrix embedding; // (V, d)
    std::vector<LayerWeights> layers;
    std::vector<float> final_norm;
    Matrix head; // (V, d)
};

/* Visits every tensor in the canonical directory order used by the weight
 * file and by seeded initialization. shape is {rows, cols} or {len}. */
void for_each_tensor(Weights& w,
                     const std::function<void(const std::string& name,
                                              std::vector<float>& data,
                                              std::vector<int> shape)>& fn);
void for_each_tensor(const Weights& w,
                     const std::function<void(const std::string& name,
                                              const std::vector<float>& data,
                                              std::vector<int> shape)>& fn);

/* Shaped, zero-filled weights for the given config (loader scaffold). */
Weights zero_weights(const ModelConfig& cfg);

/* Fresh weights from a seeded stream: matrices and biases uniform in
 * [-1/sqrt(d), 1/sqrt(d)] with d = hidden, norm gains 1. One xoshiro
 * stream consumed in directory order. */
std::shared_ptr<Weights> init_weights(const ModelConfig& cfg, std::uint64_t seed);

/* Rotates one head vector in place (half-split pairing). */
void apply_rope(float* v, int head_dim, int pos, float base);

struct VerifyOutput {
    Matrix node_logits;              // one row per tree node
    std::vector<float> attach_logits; // logits at the tree's attachment slot
};

struct StepTrace {
    long long lseq_start = 0;
    int rows = 0;
    bool had_pending = false;
    std::vector<int> row_positions;
    std::vector<int> row_ancestors; // ancestor count per row, self included
    std::vector<std::optional<BlockMask>> masks; // per layer, nullopt = dense
    std::vector<long long> retained_keys; // per layer, summed over KV heads
    std::uint64_t attn_score_delta = 0;
    /* diagnostic per-row retrieval masks, [layer][row], only when enabled */
    std::vector<std::vector<BlockMask>> row_masks;
};

struct SessionTrace {
    long long prefill_tokens = 0;
    std::vector<long long> advance_keys; // cache size seen by each advance call
    std::vector<StepTrace> steps;
    std::vector<FfnCallRecord> ffn_calls;        // dense-layer FFN
    std::vector<FfnCallRecord> expert_ffn_calls; // inside routed experts
    std::vector<std::pair<int, int>> moe_calls;  // (i_star, k)
    /* calibration stream: 0-based layer -> per-token ascending weights */
    std::map<int, std::vector<std::vector<float>>> router_weights;
};

struct SessionOptions {
    bool tracing = false;
    bool collect_router = false;
    bool row_mask_diagnostics = false;
};

struct MeasuredSparsity {
    double s_a = 0.0, s_f = 0.0, s_e = 0.0;
    double expert_ffn = 0.0; // channel sparsity inside kept experts
};

/* One decode session: weights + cache + counter + plan. Single-threaded;
 * copyable (cache and counters are value types, weights shared read-only). */
class Session {
public:
    Session(std::shared_ptr<const Weights> weights, SparsityPlan plan,
            SessionOptions opts = {});

    /* Dense forward over the prompt; fills the cache, returns final-position
     * logits. Cache must be empty. */
    std::vector<float> prefill(std::span<const int> tokens);

    /* Scores all tree nodes in one pass under the session's plan. Draft
     * K/V are staged, not cached; a pending token from the previous step is
     * folded into the batch and its K/V committed at the end of the pass. */
    VerifyOutput verify_forward(const DraftTree& tree);

    /* Appends the accepted root-to-node chain's staged K/V in path order;
     * the trailing emitted token becomes the next step's pending token. */
    void commit(const DraftTree& tree, std::span<const int> accepted_path,
                int bonus_token);

    /* Single-token dense decode step (draft-model path). */
    std::vector<float> advance(int token);
    void truncate_to(int new_len);

    /* Router softmax + top-k for a hidden vector; weights ascending. */
    RoutedExperts route_topk(std::span<const float> x, int layer);

    int committed_len() const { return cache_.seq_len(); }
    std::optional<int> pending_token() const { return pending_token_; }
    const std::vector<float>& entry_logits() const { return entry_logits_; }
    const FlopCounter& counter() const { return counter_; }
    const SessionTrace& trace() const { return trace_; }
    const ModelConfig& config() const { return weights_->config; }
    const Weights& weights() const { return *weights_; }
    const SparsityPlan& plan() const { return plan_; }
    const SessionOptions& options() const { return opts_; }
    const KVCache& cache() const { return cache_; }
    MeasuredSparsity measured_sparsity() const;

private:
    struct BatchLayout {
        std::vector<int> tokens, positions;
        std::vector<std::vector<int>> ancestors; // batch row indices, ascending
    };

    Matrix embed(const std::vector<int>& tokens) const;
    void attend_row(int layer, const float* q_row, int cache_limit,
                    const BlockMask* mask, const Matrix* staged_k,
                    const Matrix* staged_v, const std::vector<int>* anc,
                    float* out);
    void layer_ffn(int layer, Matrix& x, const Matrix& xn);
    std::vector<float> head_logits(const float* h_row);
    std::optional<BlockMask> layer_mask(int layer, const Matrix& q_row0,
                                        long long budget,
                                        std::vector<std::optional<BlockMask>>& prev);
    Matrix run_layers(const BatchLayout& b, bool append, bool sparse,
                      std::vector<std::optional<BlockMask>>* masks_out,
                      std::vector<long long>* retained_out,
                      std::vector<std::vector<BlockMask>>* row_masks_out);

    std::shared_ptr<const Weights> weights_;
    SparsityPlan plan_;
    SessionOptions opts_;
    KVCache cache_;
    FlopCounter counter_;
    SessionTrace trace_;

    std::optional<int> pending_token_;
    std::vector<float> entry_logits_;
    bool verify_outstanding_ = false;
    std::vector<Matrix> staged_k_, staged_v_; // per layer, rows x (H*hd)
    int staged_rows_ = 0;
    bool staged_had_pending_ = false;

    // always-on sparsity accumulators
    long long retained_sum_ = 0, total_keys_sum_ = 0;
    long long ffn_calls_n_ = 0;
    double ffn_ratio_sum_ = 0.0;
    long long expert_calls_n_ = 0;
    double expert_ratio_sum_ = 0.0;
    long long moe_calls_n_ = 0, moe_skip_sum_ = 0;
};

} // namespace sv
