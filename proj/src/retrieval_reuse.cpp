#include "sv/retrieval_reuse.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <ostream>

#include "sv/model.hpp"

namespace sv {

bool AnchorSet::is_anchor(int layer_1based) const {
    return std::binary_search(anchors.begin(), anchors.end(), layer_1based);
}

void AnchorSet::validate() const {
    if (num_layers < 1) throw ConfigError("AnchorSet: num_layers >= 1 required");
    if (anchors.empty() || anchors.front() != 1)
        throw ConfigError("AnchorSet: layer 1 must be an anchor");
    if (!std::is_sorted(anchors.begin(), anchors.end()))
        throw ConfigError("AnchorSet: anchors must be sorted ascending");
    if (std::adjacent_find(anchors.begin(), anchors.end()) != anchors.end())
        throw ConfigError("AnchorSet: duplicate anchor");
    if (anchors.back() > num_layers)
        throw ConfigError("AnchorSet: anchor index exceeds num_layers");
}

double jaccard(std::span<const int> a_sorted, std::span<const int> b_sorted) {
    if (a_sorted.empty() && b_sorted.empty()) return 1.0;
    std::size_t i = 0, j = 0, inter = 0;
    while (i < a_sorted.size() && j < b_sorted.size()) {
        if (a_sorted[i] == b_sorted[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (a_sorted[i] < b_sorted[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const std::size_t uni = a_sorted.size() + b_sorted.size() - inter;
    return double(inter) / double(uni);
}

AnchorSet select_anchors(std::span<const double> adjacent_similarities, int k_anchor) {
    const int L = int(adjacent_similarities.size());
    if (k_anchor < 1 || k_anchor > L)
        throw ConfigError("select_anchors: K_anchor out of range");

    std::vector<int> order(L);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        const double dx = 1.0 - adjacent_similarities[x];
        const double dy = 1.0 - adjacent_similarities[y];
        if (dx != dy) return dx > dy;
        return x < y;
    });

    AnchorSet a;
    a.num_layers = L;
    for (int i = 0; i < k_anchor; ++i) a.anchors.push_back(order[i] + 1);
    std::sort(a.anchors.begin(), a.anchors.end());
    a.validate();
    return a;
}

int nearest_anchor(int layer_1based, const AnchorSet& a) {
    if (a.is_anchor(layer_1based)) return layer_1based;
    int best = 0;
    for (int i : a.anchors)
        if (i < layer_1based) best = i;
    if (best == 0) throw LogicError("nearest_anchor: no preceding anchor");
    return best;
}

ReuseCalibReport calibrate_anchors(const Weights& weights,
                                   const std::vector<std::vector<int>>& sequences,
                                   const AttnSparsityConfig& attn_cfg, int k_anchor,
                                   std::ostream& warn) {
    attn_cfg.validate();
    if (sequences.empty())
        throw ConfigError("calibrate_anchors: no calibration sequences");
    const int L = weights.config.num_layers;

    // non-owning handle; the caller keeps the weights alive
    auto handle = std::shared_ptr<const Weights>(&weights, [](const Weights*) {});

    ReuseCalibReport rep;
    std::vector<double> sim_sum(std::size_t(L), 0.0);
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        const auto& seq = sequences[s];
        const long long prefix = (long long)seq.size() - 1;
        if (prefix <= attn_cfg.base_length) {
            warn << "warning: calibration sample " << s << " skipped (prefix "
                 << prefix << " <= base length " << attn_cfg.base_length << ")\n";
            ++rep.samples_skipped;
            continue;
        }

        SparsityPlan plan;
        plan.attention = AttnPlan{attn_cfg, std::nullopt}; // retrieval at every layer
        SessionOptions opts;
        opts.tracing = true;
        Session sess(handle, plan, opts);
        sess.prefill(std::span<const int>(seq.data(), seq.size() - 1));

        DraftTree tree;
        tree.nodes.push_back({-1, seq.back(), 1.0f});
        tree.node_dist.push_back(
            std::vector<float>(std::size_t(weights.config.vocab),
                               1.0f / float(weights.config.vocab)));
        sess.verify_forward(tree);

        const StepTrace& st = sess.trace().steps.front();
        const int nb = sess.cache().num_blocks();
        std::vector<std::vector<int>> flat(static_cast<std::size_t>(L));
        for (int l = 0; l < L; ++l) {
            if (!st.masks[l])
                throw LogicError("calibrate_anchors: retrieval did not activate");
            flat[l] = flatten_mask(*st.masks[l], nb);
        }
        for (int l = 1; l < L; ++l) sim_sum[l] += jaccard(flat[l - 1], flat[l]);
        rep.sample_masks.push_back(std::move(flat));
        ++rep.samples_used;
    }
    if (rep.samples_used == 0)
        throw ConfigError("calibrate_anchors: every calibration sequence was too short");

    rep.mean_adjacent_jaccard.assign(std::size_t(L), 0.0);
    for (int l = 1; l < L; ++l)
        rep.mean_adjacent_jaccard[l] = sim_sum[l] / double(rep.samples_used);
    rep.anchors = select_anchors(rep.mean_adjacent_jaccard, k_anchor);
    return rep;
}

std::vector<int> flatten_mask(const BlockMask& m, int num_blocks) {
    std::vector<int> flat;
    for (std::size_t h = 0; h < m.head_blocks.size(); ++h)
        for (int b : m.head_blocks[h]) flat.push_back(int(h) * num_blocks + b);
    std::sort(flat.begin(), flat.end());
    return flat;
}

} // namespace sv
