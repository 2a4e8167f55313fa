#pragma once

#include <algorithm>
#include <vector>

#include "sv/error.hpp"

namespace sv {

/* parent = -1 attaches to the committed prefix. q is the draft probability
 * of `token` at the node's slot. */
struct DraftNode {
    int parent = -1;
    int token = 0;
    float q = 0.0f;
};

struct DraftTree {
    std::vector<DraftNode> nodes;
    /* Full draft distribution at each node's slot (siblings share values);
     * consumed by residual resampling. */
    std::vector<std::vector<float>> node_dist;

    void validate(int vocab) const;
    int depth_of(int i) const;
    /* Longest root-to-leaf path measured in nodes (chain of K -> K). */
    int max_depth() const;
    std::vector<int> children_of(int parent) const; // parent = -1 for root
};

inline void DraftTree::validate(int vocab) const {
    if (nodes.empty()) throw InputError("DraftTree: empty tree");
    if (node_dist.size() != nodes.size())
        throw InputError("DraftTree: node_dist size mismatch");
    for (int i = 0; i < int(nodes.size()); ++i) {
        const DraftNode& n = nodes[i];
        if (n.parent < -1 || n.parent >= i)
            throw InputError("DraftTree: node parent breaks topological order");
        if (n.token < 0 || n.token >= vocab) throw InputError("DraftTree: token out of vocab");
        if (!(n.q > 0.0f && n.q <= 1.0f)) throw InputError("DraftTree: q outside (0,1]");
        if (int(node_dist[i].size()) != vocab)
            throw InputError("DraftTree: node distribution length != vocab");
    }
}

inline int DraftTree::depth_of(int i) const {
    int d = 0;
    for (int p = nodes[i].parent; p != -1; p = nodes[p].parent) ++d;
    return d;
}

inline int DraftTree::max_depth() const {
    int mx = 0;
    for (int i = 0; i < int(nodes.size()); ++i) mx = std::max(mx, depth_of(i) + 1);
    return mx;
}

inline std::vector<int> DraftTree::children_of(int parent) const {
    std::vector<int> out;
    for (int i = 0; i < int(nodes.size()); ++i)
        if (nodes[i].parent == parent) out.push_back(i);
    return out;
}

} // namespace sv
