#pragma once

#include <optional>

#include "sv/retrieval_reuse.hpp"
#include "sv/sparse_attention.hpp"
#include "sv/sparse_moe.hpp"

namespace sv {

struct AttnPlan {
    AttnSparsityConfig cfg;
    std::optional<AnchorSet> anchors; // absent: every layer retrieves
};

struct MoEPlan {
    ThresholdMap map;
    int budget_m = 0; // max experts to skip; 0 keeps the mechanism inert
    SkipRules rules;
    bool renormalize = false;
};

/* Which of the three sparsity dimensions are active for a session. The
 * all-off plan reproduces the dense path bit-exactly. */
struct SparsityPlan {
    std::optional<AttnPlan> attention;
    std::optional<float> ffn_tau;
    std::optional<MoEPlan> moe;

    bool all_off() const { return !attention && !ffn_tau && !moe; }
    float effective_tau() const { return ffn_tau ? *ffn_tau : 0.0f; }
    void validate(int num_layers) const;
};

inline void SparsityPlan::validate(int num_layers) const {
    if (attention) {
        attention->cfg.validate();
        if (attention->anchors) {
            attention->anchors->validate();
            if (attention->anchors->num_layers != num_layers)
                throw ConfigError("SparsityPlan: anchor set layer count mismatch");
        }
    }
    if (ffn_tau && *ffn_tau < 0.0f)
        throw ConfigError("SparsityPlan: ffn_tau must be >= 0");
    if (moe) {
        moe->map.validate();
        if (moe->budget_m < 0 || moe->budget_m >= moe->map.k)
            throw ConfigError("SparsityPlan: moe budget m must lie in [0,k)");
    }
}

} // namespace sv
