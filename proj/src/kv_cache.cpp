#include "sv/kv_cache.hpp"

#include <cstring>

namespace sv {

KVCache::KVCache(int num_layers, int num_kv_heads, int head_dim, int block_size)
    : num_layers_(num_layers),
      num_kv_heads_(num_kv_heads),
      head_dim_(head_dim),
      block_size_(block_size),
      streams_(std::size_t(num_layers) * num_kv_heads) {
    if (num_layers < 1 || num_kv_heads < 1 || head_dim < 1 || block_size < 1)
        throw ConfigError("KVCache: all dimensions must be >= 1");
}

int KVCache::num_blocks() const {
    return (seq_len_ + block_size_ - 1) / block_size_;
}

int KVCache::block_end(int b) const {
    const int e = (b + 1) * block_size_;
    return e < seq_len_ ? e : seq_len_;
}

int KVCache::push() {
    const int pos = seq_len_;
    if (pos % block_size_ == 0) {
        for (auto& s : streams_) {
            KVBlock blk;
            blk.first_pos = pos;
            blk.keys.resize(std::size_t(block_size_) * head_dim_, 0.0f);
            blk.values.resize(std::size_t(block_size_) * head_dim_, 0.0f);
            s.push_back(std::move(blk));
        }
    }
    for (auto& s : streams_) s.back().count++;
    ++seq_len_;
    return pos;
}

void KVCache::write(int layer, int head, int pos, std::span<const float> k,
                    std::span<const float> v) {
    if (pos < 0 || pos >= seq_len_) throw LogicError("KVCache::write: position not open");
    if (int(k.size()) != head_dim_ || int(v.size()) != head_dim_)
        throw ConfigError("KVCache::write: head_dim mismatch");
    KVBlock& blk = stream(layer, head)[pos / block_size_];
    const std::size_t off = std::size_t(pos % block_size_) * head_dim_;
    std::memcpy(blk.keys.data() + off, k.data(), head_dim_ * sizeof(float));
    std::memcpy(blk.values.data() + off, v.data(), head_dim_ * sizeof(float));
}

void KVCache::truncate(int new_len) {
    if (new_len < 0 || new_len > seq_len_)
        throw LogicError("KVCache::truncate: bad length");
    const int nb = new_len == 0 ? 0 : (new_len + block_size_ - 1) / block_size_;
    for (auto& s : streams_) {
        s.resize(nb);
        if (nb > 0) s.back().count = new_len - (nb - 1) * block_size_;
    }
    seq_len_ = new_len;
}

const float* KVCache::key(int layer, int head, int pos) const {
    const KVBlock& blk = stream(layer, head)[pos / block_size_];
    return blk.keys.data() + std::size_t(pos % block_size_) * head_dim_;
}

const float* KVCache::value(int layer, int head, int pos) const {
    const KVBlock& blk = stream(layer, head)[pos / block_size_];
    return blk.values.data() + std::size_t(pos % block_size_) * head_dim_;
}

const KVBlock& KVCache::block(int layer, int head, int b) const {
    return stream(layer, head)[b];
}

} // namespace sv
