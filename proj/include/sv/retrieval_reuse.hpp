#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sv/error.hpp"
#include "sv/sparse_attention.hpp"

namespace sv {

/* Anchor layers perform their own block retrieval; every other layer reuses
 * the nearest preceding anchor's mask. Layer indices are 1-based here (and
 * in the JSON file); the engine converts at the boundary. Layer 1 is always
 * an anchor. */
struct AnchorSet {
    int num_layers = 0;
    std::vector<int> anchors; // sorted ascending, 1-based, contains 1

    bool is_anchor(int layer_1based) const;
    void validate() const;
};

/* |a∩b| / |a∪b|; both empty -> 1.0. */
double jaccard(std::span<const int> a_sorted, std::span<const int> b_sorted);

/* Picks the K layers with the largest 1-J, ties toward the lower layer
 * index. similarities[0] belongs to layer 1 and is 0 by definition, which
 * guarantees layer 1 is selected. */
AnchorSet select_anchors(std::span<const double> adjacent_similarities, int k_anchor);

/* a(l) = max{i in A : i < l} for non-anchor l; anchors retrieve for
 * themselves and return l. */
int nearest_anchor(int layer_1based, const AnchorSet& a);

struct ReuseCalibReport {
    AnchorSet anchors;
    std::vector<double> mean_adjacent_jaccard; // per layer, [0] = layer 1 = 0.0
    int samples_used = 0;
    int samples_skipped = 0;
    /* per sample, per layer: retrieved mask (flattened (head,block) ids) */
    std::vector<std::vector<std::vector<int>>> sample_masks;
};

struct Weights; // model.hpp

/* Runs one verification-style retrieval per calibration sequence with
 * retrieval forced at every layer, averages adjacent-layer Jaccard over
 * samples, then picks anchors. Sequences too short to activate sparsity
 * (prefix length <= L0) are skipped with a warning on `warn`. */
ReuseCalibReport calibrate_anchors(const Weights& weights,
                                   const std::vector<std::vector<int>>& sequences,
                                   const AttnSparsityConfig& attn_cfg, int k_anchor,
                                   std::ostream& warn);

/* Flattens a per-head mask to sortable (head,block) ids for Jaccard. */
std::vector<int> flatten_mask(const BlockMask& m, int num_blocks);

} // namespace sv
