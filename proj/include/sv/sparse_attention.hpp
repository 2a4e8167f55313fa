#pragma once

#include <optional>
#include <vector>

#include "sv/error.hpp"
#include "sv/kernels.hpp"
#include "sv/kv_cache.hpp"

namespace sv {

struct AttnSparsityConfig {
    int base_length = 128;   // L0: no eviction at or below this many cached tokens
    double rho = 0.5;        // retained-token coefficient past L0
    int sink_blocks = 1;     // leading blocks always kept
    int local_blocks = 1;    // trailing blocks always kept
    int block_size = 16;     // mirrors the cache
    bool max_aggregation = false; // GQA score aggregation: max instead of mean

    void validate() const;
};

/* Retained blocks of one layer, per KV head, sorted ascending. */
struct BlockMask {
    enum class Provenance { retrieved, reused };
    Provenance provenance = Provenance::retrieved;
    std::vector<std::vector<int>> head_blocks;

    long long total_retained() const {
        long long t = 0;
        for (auto& h : head_blocks) t += (long long)h.size();
        return t;
    }
    bool same_sets(const BlockMask& o) const { return head_blocks == o.head_blocks; }
};

/* Per-block importance from the first verification token's queries:
 * s_{h,b} = mean over occupied slots of dot(q̃_h, k). q0_heads holds the
 * n_h query-head vectors (rows, already rotated to the scoring position);
 * heads are aggregated per KV-head group by mean (or max of per-query
 * scores when max_aggregation). No 1/sqrt(head_dim) scaling: scores only
 * rank blocks. */
std::vector<std::vector<double>> score_blocks(const KVCache& cache, int layer,
                                              const Matrix& q0_heads,
                                              const AttnSparsityConfig& cfg);

/* nullopt = full attention (no eviction). Otherwise the aggregate
 * (head, block)-pair budget, floored, clamped to
 * [H*(sink+local), H*num_blocks]. Accepts rho in (0,1] so callers can
 * evaluate the rho->1 limit; config validation keeps the operating range
 * open. */
std::optional<long long> compute_budget(long long L_seq, const AttnSparsityConfig& cfg,
                                        int num_kv_heads);

/* Splits the aggregate budget uniformly (budget/H per head, remainder to
 * the lowest-index heads), forces sink and local blocks, fills the rest by
 * descending score with ties toward the lower block index. */
BlockMask select_blocks(const std::vector<std::vector<double>>& scores,
                        long long budget, const AttnSparsityConfig& cfg,
                        int num_blocks);

/* |intersection| / N over all heads (micro-average); both masks must hold
 * the same total budget N. */
double overlap_ratio(const BlockMask& a, const BlockMask& b);

} // namespace sv
