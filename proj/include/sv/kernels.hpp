#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sv/error.hpp"

namespace sv {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data; // row-major, rows*cols

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(std::size_t(r) * c, 0.0f) {}

    float* row(int i) { return data.data() + std::size_t(i) * cols; }
    const float* row(int i) const { return data.data() + std::size_t(i) * cols; }
    float& at(int i, int j) { return data[std::size_t(i) * cols + j]; }
    float at(int i, int j) const { return data[std::size_t(i) * cols + j]; }
};

bool matrix_finite(const Matrix& m);

enum class FlopCategory : int {
    attn_proj = 0,
    attn_score,
    ffn,
    moe_expert,
    moe_router,
    other,
};
inline constexpr int kNumFlopCategories = 6;
const char* flop_category_name(FlopCategory c);

/* Per-category multiply-add counts. One counter per session; merge is
 * element-wise sum. */
struct FlopCounter {
    std::array<std::uint64_t, kNumFlopCategories> counts{};

    void add(FlopCategory c, std::uint64_t n) { counts[int(c)] += n; }
    std::uint64_t get(FlopCategory c) const { return counts[int(c)]; }
    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto v : counts) t += v;
        return t;
    }
    void merge(const FlopCounter& o) {
        for (int i = 0; i < kNumFlopCategories; ++i) counts[i] += o.counts[i];
    }
};

/* Thread-local switch for the OpenMP paths; harness workers flip it off so
 * nested parallelism never appears. */
bool& parallel_enabled();
struct SerialSection {
    SerialSection() : prev_(parallel_enabled()) { parallel_enabled() = false; }
    ~SerialSection() { parallel_enabled() = prev_; }
private:
    bool prev_;
};

/* Dot product of two float spans with 64-bit accumulation in a fixed
 * evaluation order: product k goes to lane k mod 8 (full 8-blocks in
 * ascending k, then the tail), lanes reduced pairwise. The order is part of
 * the kernel contract; the serial reference replicates it exactly. */
double dot_f32(const float* a, const float* b, int n);

/* y = a(m×k) · b(k×n); adds 2·m·k·n to `cat`. Output elements are
 * independent, so the OpenMP path is bit-identical to serial. */
Matrix matmul(const Matrix& a, const Matrix& b,
              FlopCounter* counter = nullptr,
              FlopCategory cat = FlopCategory::other);

/* y = a(m×k) · bt(n×k)ᵀ; bt holds the transposed operand row-major so both
 * dot operands are contiguous. Model weights are stored in this layout. */
Matrix matmul_bt(const Matrix& a, const Matrix& bt,
                 FlopCounter* counter = nullptr,
                 FlopCategory cat = FlopCategory::other);

/* Max-subtracted softmax; 64-bit sum. Preserves argsort order. */
std::vector<float> softmax(std::span<const float> v);

/* Gate nonlinearity: SiLU x·sigmoid(x), evaluated in 64-bit. */
float silu(float x);

/* out_i = gain_i · x_i / sqrt(mean(x²)+ε), ε = 1e-6. */
std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain);

namespace ref {

/* Naive serial triple loop, single 64-bit accumulator per element, ascending
 * k. Test oracle and benchmark baseline. */
Matrix matmul(const Matrix& a, const Matrix& b);

/* Serial replica of the default kernel's lane order; bit-identical to
 * sv::matmul under any thread count. */
Matrix matmul_lanes(const Matrix& a, const Matrix& b);

} // namespace ref

} // namespace sv
