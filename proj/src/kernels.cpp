#include "sv/kernels.hpp"

#include <cmath>
#include <cstddef>

namespace sv {

bool matrix_finite(const Matrix& m) {
    for (float v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

const char* flop_category_name(FlopCategory c) {
    switch (c) {
        case FlopCategory::attn_proj: return "attn_proj";
        case FlopCategory::attn_score: return "attn_score";
        case FlopCategory::ffn: return "ffn";
        case FlopCategory::moe_expert: return "moe_expert";
        case FlopCategory::moe_router: return "moe_router";
        case FlopCategory::other: return "other";
    }
    return "?";
}

bool& parallel_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

double dot_f32(const float* a, const float* b, int n) {
    double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    const int n8 = n & ~7;
    for (int k = 0; k < n8; k += 8)
        for (int l = 0; l < 8; ++l)
            lane[l] += double(a[k + l]) * double(b[k + l]);
    for (int k = n8; k < n; ++k)
        lane[k - n8] += double(a[k]) * double(b[k]);
    return ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
           ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

static void check_mm(int ak, int bk, const char* who) {
    if (ak != bk) throw ConfigError(std::string(who) + ": inner dimension mismatch");
}

Matrix matmul(const Matrix& a, const Matrix& b, FlopCounter* counter, FlopCategory cat) {
    check_mm(a.cols, b.rows, "matmul");
    const int m = a.rows, k = a.cols, n = b.cols;
    Matrix y(m, n);

    /* Both branches gather columns so the inner dot runs on contiguous
     * memory in the same order; results are bit-identical. */
    if (parallel_enabled() && std::size_t(m) * n >= 4096) {
        Matrix bt(n, k);
#pragma omp parallel for schedule(static)
        for (int j = 0; j < n; ++j)
            for (int kk = 0; kk < k; ++kk)
                bt.at(j, kk) = b.at(kk, j);
#pragma omp parallel for collapse(2) schedule(static)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                y.at(i, j) = float(dot_f32(a.row(i), bt.row(j), k));
    } else {
        std::vector<float> col(static_cast<std::size_t>(k));
        for (int j = 0; j < n; ++j) {
            for (int kk = 0; kk < k; ++kk) col[kk] = b.at(kk, j);
            for (int i = 0; i < m; ++i)
                y.at(i, j) = float(dot_f32(a.row(i), col.data(), k));
        }
    }
    if (counter) counter->add(cat, 2ull * m * k * n);
    return y;
}

Matrix matmul_bt(const Matrix& a, const Matrix& bt, FlopCounter* counter, FlopCategory cat) {
    check_mm(a.cols, bt.cols, "matmul_bt");
    const int m = a.rows, k = a.cols, n = bt.rows;
    Matrix y(m, n);
    if (parallel_enabled() && std::size_t(m) * n >= 4096) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                y.at(i, j) = float(dot_f32(a.row(i), bt.row(j), k));
    } else {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                y.at(i, j) = float(dot_f32(a.row(i), bt.row(j), k));
    }
    if (counter) counter->add(cat, 2ull * m * k * n);
    return y;
}

std::vector<float> softmax(std::span<const float> v) {
    if (v.empty()) throw ConfigError("softmax: empty input");
    float mx = v[0];
    for (float x : v)
        if (x > mx) mx = x;
    std::vector<float> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double e = std::exp(double(v[i]) - double(mx));
        out[i] = float(e);
        sum += e;
    }
    const double inv = 1.0 / sum;
    for (auto& x : out) x = float(double(x) * inv);
    return out;
}

float silu(float x) {
    const double xd = x;
    return float(xd / (1.0 + std::exp(-xd)));
}

std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain) {
    if (x.size() != gain.size()) throw ConfigError("rms_norm: length mismatch");
    double ss = 0.0;
    for (float v : x) ss += double(v) * double(v);
    const double inv = 1.0 / std::sqrt(ss / double(x.size()) + 1e-6);
    std::vector<float> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = float(double(gain[i]) * double(x[i]) * inv);
    return out;
}

namespace ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_mm(a.cols, b.rows, "ref::matmul");
    Matrix y(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k)
                acc += double(a.at(i, k)) * double(b.at(k, j));
            y.at(i, j) = float(acc);
        }
    return y;
}

Matrix matmul_lanes(const Matrix& a, const Matrix& b) {
    check_mm(a.cols, b.rows, "ref::matmul_lanes");
    Matrix y(a.rows, b.cols);
    std::vector<float> col(static_cast<std::size_t>(a.cols));
    for (int j = 0; j < b.cols; ++j) {
        for (int k = 0; k < a.cols; ++k) col[k] = b.at(k, j);
        for (int i = 0; i < a.rows; ++i)
            y.at(i, j) = float(dot_f32(a.row(i), col.data(), a.cols));
    }
    return y;
}

} // namespace ref

} // namespace sv
