#pragma once

#include <map>
#include <span>
#include <vector>

#include "sv/sparse_ffn.hpp"

namespace sv {

/* Routed experts of one token, sorted by ascending routing weight. */
struct RoutedExperts {
    std::vector<int> ids;       // expert ids, parallel to weights
    std::vector<float> weights; // softmax values, ascending
};

/* Per-MoE-layer skip thresholds beta_1..beta_{k-1} (index m-1 = level m).
 * Layer keys are 0-based engine indices. */
struct ThresholdMap {
    int k = 0;
    long long calib_tokens = 0;
    std::map<int, std::vector<double>> layer_beta;

    void validate() const;
};

struct ExpertSelection {
    RoutedExperts routed; // ascending weights
    int i_star = 0;       // skipped count, the i_star lowest-weight experts
    std::vector<int> kept_ids() const {
        return {routed.ids.begin() + i_star, routed.ids.end()};
    }
};

struct SkipRules {
    bool literal_beta_m = false; // compare every level against beta_m (as printed)
    bool alt_numerator = false;  // r_i = skipped mass instead of kept mass
};

/* r_m = (sum of the k-m smallest weights) / (sum of all weights). */
double calib_ratio(std::span<const float> w_ascending, int m);

/* As calib_ratio but with the alternative numerator sum_{j<=i} w_j. */
double calib_ratio_alt(std::span<const float> w_ascending, int m);

/* Per layer, per level m: beta_m = median of r_m over calibration tokens;
 * even count -> mean of the two middle values. Stream maps 0-based layer
 * index to per-token ascending weight vectors. */
ThresholdMap build_threshold_map(
    const std::map<int, std::vector<std::vector<float>>>& stream, int k, int max_m);

/* i* = max{i in [1,m] : r_i < beta_i} (or beta_m under literal_beta_m);
 * 0 when no level qualifies. The top-weight expert is never skipped since
 * m < k. */
ExpertSelection decide_skip(const RoutedExperts& routed,
                            std::span<const double> beta, int m,
                            SkipRules rules = {});

/* y = sum over kept experts of w_j * expert_j(x); weights are not
 * renormalized unless `renormalize`. Each expert runs the gated FFN with
 * channel pruning at ffn_tau (0 = dense experts). Expert work is counted
 * into moe_expert. */
std::vector<float> sparse_moe_forward(std::span<const float> x,
                                      const ExpertSelection& sel,
                                      std::span<const FfnWeights> experts,
                                      float ffn_tau, bool renormalize,
                                      FlopCounter* counter,
                                      std::vector<FfnCallRecord>* ffn_records = nullptr);

} // namespace sv
