#include "sv/sparse_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sv {

void AttnSparsityConfig::validate() const {
    if (!(rho > 0.0 && rho < 1.0))
        throw ConfigError("attention sparsity: rho must lie in (0,1)");
    if (block_size < 1) throw ConfigError("attention sparsity: block_size >= 1 required");
    if (sink_blocks < 0 || local_blocks < 0 || sink_blocks + local_blocks < 1)
        throw ConfigError("attention sparsity: need at least one sink or local block");
    if (base_length < (sink_blocks + local_blocks) * block_size)
        throw ConfigError("attention sparsity: base_length must cover sink+local blocks");
}

std::vector<std::vector<double>> score_blocks(const KVCache& cache, int layer,
                                              const Matrix& q0_heads,
                                              const AttnSparsityConfig& cfg) {
    const int H = cache.num_kv_heads();
    const int hd = cache.head_dim();
    const int nb = cache.num_blocks();
    const int n_h = q0_heads.rows;
    if (q0_heads.cols != hd) throw ConfigError("score_blocks: head_dim mismatch");
    if (n_h % H != 0) throw ConfigError("score_blocks: query heads not divisible by KV heads");
    const int group = n_h / H;

    std::vector<std::vector<double>> scores(H, std::vector<double>(nb, 0.0));
    std::vector<float> qbar(hd);
    for (int h = 0; h < H; ++h) {
        if (!cfg.max_aggregation) {
            for (int c = 0; c < hd; ++c) {
                double acc = 0.0;
                for (int g = 0; g < group; ++g) acc += q0_heads.at(h * group + g, c);
                qbar[c] = float(acc / group);
            }
        }
        for (int b = 0; b < nb; ++b) {
            const KVBlock& blk = cache.block(layer, h, b);
            if (cfg.max_aggregation) {
                double best = -std::numeric_limits<double>::infinity();
                for (int g = 0; g < group; ++g) {
                    double acc = 0.0;
                    for (int s = 0; s < blk.count; ++s)
                        acc += dot_f32(q0_heads.row(h * group + g),
                                       blk.keys.data() + std::size_t(s) * hd, hd);
                    best = std::max(best, acc / blk.count);
                }
                scores[h][b] = best;
            } else {
                double acc = 0.0;
                for (int s = 0; s < blk.count; ++s)
                    acc += dot_f32(qbar.data(), blk.keys.data() + std::size_t(s) * hd, hd);
                scores[h][b] = acc / blk.count;
            }
        }
    }
    return scores;
}

std::optional<long long> compute_budget(long long L_seq, const AttnSparsityConfig& cfg,
                                        int num_kv_heads) {
    if (L_seq < 1) throw ConfigError("compute_budget: L_seq >= 1 required");
    if (!(cfg.rho > 0.0 && cfg.rho <= 1.0))
        throw ConfigError("compute_budget: rho must lie in (0,1]");
    if (L_seq <= cfg.base_length) return std::nullopt;

    const long long nb = (L_seq + cfg.block_size - 1) / cfg.block_size;
    const double kept = (double(L_seq - cfg.base_length) * cfg.rho + double(cfg.base_length));
    long long budget = (long long)std::floor(kept * num_kv_heads / cfg.block_size);
    const long long lo = (long long)num_kv_heads * (cfg.sink_blocks + cfg.local_blocks);
    const long long hi = (long long)num_kv_heads * nb;
    if (budget < lo) budget = lo;
    if (budget > hi) budget = hi;
    return budget;
}

BlockMask select_blocks(const std::vector<std::vector<double>>& scores,
                        long long budget, const AttnSparsityConfig& cfg,
                        int num_blocks) {
    const int H = int(scores.size());
    if (H < 1) throw ConfigError("select_blocks: no heads");
    if (budget < (long long)H * (cfg.sink_blocks + cfg.local_blocks))
        throw ConfigError("select_blocks: budget below mandatory sink+local blocks");

    BlockMask mask;
    mask.provenance = BlockMask::Provenance::retrieved;
    mask.head_blocks.resize(H);

    const long long base = budget / H;
    const long long rem = budget % H;
    for (int h = 0; h < H; ++h) {
        const long long share = std::min<long long>(base + (h < rem ? 1 : 0), num_blocks);
        std::vector<char> mandatory(num_blocks, 0);
        for (int b = 0; b < std::min(cfg.sink_blocks, num_blocks); ++b) mandatory[b] = 1;
        for (int b = std::max(num_blocks - cfg.local_blocks, 0); b < num_blocks; ++b)
            mandatory[b] = 1;

        std::vector<int> picked;
        for (int b = 0; b < num_blocks; ++b)
            if (mandatory[b]) picked.push_back(b);

        std::vector<int> cand;
        for (int b = 0; b < num_blocks; ++b)
            if (!mandatory[b]) cand.push_back(b);
        std::sort(cand.begin(), cand.end(), [&](int x, int y) {
            if (scores[h][x] != scores[h][y]) return scores[h][x] > scores[h][y];
            return x < y;
        });
        for (int i = 0; i < int(cand.size()) && (long long)picked.size() < share; ++i)
            picked.push_back(cand[i]);

        std::sort(picked.begin(), picked.end());
        mask.head_blocks[h] = std::move(picked);
    }
    return mask;
}

double overlap_ratio(const BlockMask& a, const BlockMask& b) {
    if (a.head_blocks.size() != b.head_blocks.size())
        throw InputError("overlap_ratio: head count mismatch");
    const long long na = a.total_retained(), nb = b.total_retained();
    if (na != nb) throw InputError("overlap_ratio: masks drawn with different budgets");
    if (na == 0) return 1.0;
    long long inter = 0;
    for (std::size_t h = 0; h < a.head_blocks.size(); ++h) {
        std::vector<int> tmp;
        std::set_intersection(a.head_blocks[h].begin(), a.head_blocks[h].end(),
                              b.head_blocks[h].begin(), b.head_blocks[h].end(),
                              std::back_inserter(tmp));
        inter += (long long)tmp.size();
    }
    return double(inter) / double(na);
}

} // namespace sv
