#pragma once

#include <span>
#include <vector>

#include "sv/error.hpp"

namespace sv {

/* One cache block: up to block_size (key,value) pairs of a single KV head.
 * Block b covers absolute positions [b*block_size, (b+1)*block_size). */
struct KVBlock {
    int first_pos = 0;
    int count = 0;
    std::vector<float> keys;   // block_size * head_dim, first count*head_dim valid
    std::vector<float> values;
};

/* Block-structured KV cache. All (layer, head) streams share one seq_len;
 * push() opens a slot everywhere, write() fills it. Only the last block may
 * be partially filled. */
class KVCache {
public:
    KVCache(int num_layers, int num_kv_heads, int head_dim, int block_size);

    int seq_len() const { return seq_len_; }
    int num_layers() const { return num_layers_; }
    int num_kv_heads() const { return num_kv_heads_; }
    int head_dim() const { return head_dim_; }
    int block_size() const { return block_size_; }

    int num_blocks() const;
    int block_of(int pos) const { return pos / block_size_; }
    int block_begin(int b) const { return b * block_size_; }
    int block_end(int b) const;      // exclusive, clamped to seq_len
    int block_occupancy(int b) const { return block_end(b) - block_begin(b); }

    /* Opens one position across every (layer, head); returns its index. */
    int push();
    void write(int layer, int head, int pos, std::span<const float> k,
               std::span<const float> v);
    void truncate(int new_len);

    const float* key(int layer, int head, int pos) const;
    const float* value(int layer, int head, int pos) const;
    const KVBlock& block(int layer, int head, int b) const;

private:
    std::vector<KVBlock>& stream(int layer, int head) {
        return streams_[std::size_t(layer) * num_kv_heads_ + head];
    }
    const std::vector<KVBlock>& stream(int layer, int head) const {
        return streams_[std::size_t(layer) * num_kv_heads_ + head];
    }

    int num_layers_, num_kv_heads_, head_dim_, block_size_;
    int seq_len_ = 0;
    std::vector<std::vector<KVBlock>> streams_; // [layer*H + head] -> blocks
};

} // namespace sv
