#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "sv/rng.hpp"
#include "sv/sparse_ffn.hpp"

using namespace sv;

namespace {

FfnWeights random_ffn(Rng& rng, int d, int df, float bound) {
    FfnWeights w;
    w.w_gate = Matrix(df, d);
    w.w_up = Matrix(df, d);
    w.w_down = Matrix(df, d);
    for (auto* m : {&w.w_gate, &w.w_up, &w.w_down})
        for (auto& v : m->data) v = rng.uniform_float(-bound, bound);
    w.b_gate.resize(df);
    w.b_up.resize(df);
    w.b_down.resize(d);
    for (auto* b : {&w.b_gate, &w.b_up})
        for (auto& v : *b) v = rng.uniform_float(-bound, bound);
    for (auto& v : w.b_down) v = rng.uniform_float(-bound, bound);
    return w;
}

std::vector<float> random_x(Rng& rng, int d) {
    std::vector<float> x(d);
    for (auto& v : x) v = rng.uniform_float(-1.0f, 1.0f);
    return x;
}

/* Independent dense evaluation through the reference matmul, with selected
 * gate channels forced to zero. */
std::vector<float> zeroed_dense_oracle(std::span<const float> x, const FfnWeights& w,
                                       const std::vector<int>& zeroed) {
    const int d = int(x.size());
    const int df = w.channels();
    Matrix xm(1, d);
    for (int i = 0; i < d; ++i) xm.at(0, i) = x[i];

    Matrix wg_t(d, df), wu_t(d, df);
    for (int i = 0; i < df; ++i)
        for (int j = 0; j < d; ++j) {
            wg_t.at(j, i) = w.w_gate.at(i, j);
            wu_t.at(j, i) = w.w_up.at(i, j);
        }
    Matrix hg = ref::matmul(xm, wg_t);
    Matrix hu = ref::matmul(xm, wu_t);
    Matrix mixed(1, df);
    for (int i = 0; i < df; ++i) {
        float h = silu(hg.at(0, i) + w.b_gate[i]);
        mixed.at(0, i) = h * (hu.at(0, i) + w.b_up[i]);
    }
    for (int i : zeroed) mixed.at(0, i) = 0.0f;
    Matrix y = ref::matmul(mixed, w.w_down);
    std::vector<float> out(d);
    for (int i = 0; i < d; ++i) out[i] = y.at(0, i) + w.b_down[i];
    return out;
}

} // namespace

TEST_CASE("select_channels: trivial cases and scan oracle") {
    std::vector<float> h1{0.2f, -0.01f, 0.5f};
    auto s0 = select_channels(h1, 0.0f);
    CHECK(s0.pruned.empty());
    CHECK(s0.sparsity() == 0.0);

    auto s1 = select_channels(h1, 0.05f);
    CHECK(s1.pruned == std::vector<int>{1});
    CHECK(s1.sparsity() == doctest::Approx(1.0 / 3.0));
    CHECK(s1.active() == 2);

    CHECK_THROWS_AS(select_channels(h1, -1.0f), ConfigError);

    Rng rng(7);
    for (int t = 0; t < 200; ++t) {
        const int n = 1 + int(rng.uniform() * 64);
        std::vector<float> h(n);
        for (auto& v : h) v = rng.uniform_float(-0.2f, 0.2f);
        const float tau = 0.05f;
        auto sel = select_channels(h, tau);
        std::vector<int> want;
        for (int i = 0; i < n; ++i)
            if (std::fabs(h[i]) < tau) want.push_back(i);
        CHECK(sel.pruned == want);
    }
}

TEST_CASE("select_channels: strict inequality at the boundary") {
    std::vector<float> h{0.05f, -0.05f, 0.0499999f};
    auto s = select_channels(h, 0.05f);
    CHECK(s.pruned == std::vector<int>{2});
}

TEST_CASE("sparse_ffn_forward: tau=0 equals dense oracle") {
    Rng rng(11);
    const int d = 16, df = 48;
    FfnWeights w = random_ffn(rng, d, df, 0.3f);
    auto x = random_x(rng, d);
    auto y = sparse_ffn_forward(x, w, 0.0f, nullptr, FlopCategory::ffn);
    auto want = zeroed_dense_oracle(x, w, {});
    for (int i = 0; i < d; ++i) CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-5));
}

TEST_CASE("sparse_ffn_forward: prune-all sentinel returns the output bias") {
    Rng rng(13);
    const int d = 8, df = 24;
    FfnWeights w = random_ffn(rng, d, df, 0.4f);
    auto x = random_x(rng, d);
    auto y = sparse_ffn_forward(x, w, std::numeric_limits<float>::infinity(), nullptr,
                                FlopCategory::ffn);
    for (int i = 0; i < d; ++i) CHECK(y[i] == w.b_down[i]);
}

TEST_CASE("sparse_ffn_forward: zeroed-dense oracle across taus") {
    Rng rng(17);
    const int d = 16, df = 64;
    for (int t = 0; t < 100; ++t) {
        FfnWeights w = random_ffn(rng, d, df, 0.3f);
        auto x = random_x(rng, d);
        for (float tau : {0.01f, 0.05f, 0.1f}) {
            FfnCallRecord rec;
            auto y = sparse_ffn_forward(x, w, tau, nullptr, FlopCategory::ffn, &rec);
            // recompute the pruned set for the oracle
            std::vector<float> h(df);
            for (int i = 0; i < df; ++i)
                h[i] = silu(float(dot_f32(x.data(), w.w_gate.row(i), d) + double(w.b_gate[i])));
            auto sel = select_channels(h, tau);
            auto want = zeroed_dense_oracle(x, w, sel.pruned);
            for (int i = 0; i < d; ++i)
                CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-5));
            CHECK(rec.pruned == int(sel.pruned.size()));
        }
    }
}

TEST_CASE("sparse_ffn_forward: monotone pruning in tau") {
    Rng rng(19);
    const int d = 12, df = 40;
    FfnWeights w = random_ffn(rng, d, df, 0.3f);
    auto x = random_x(rng, d);
    std::vector<float> h(df);
    for (int i = 0; i < df; ++i)
        h[i] = silu(float(dot_f32(x.data(), w.w_gate.row(i), d) + double(w.b_gate[i])));
    auto s1 = select_channels(h, 0.01f);
    auto s2 = select_channels(h, 0.05f);
    auto s3 = select_channels(h, 0.10f);
    CHECK(std::includes(s2.pruned.begin(), s2.pruned.end(), s1.pruned.begin(), s1.pruned.end()));
    CHECK(std::includes(s3.pruned.begin(), s3.pruned.end(), s2.pruned.begin(), s2.pruned.end()));
}

TEST_CASE("sparse_ffn_forward: FLOPs scale exactly with active channels") {
    Rng rng(23);
    const int d = 16, df = 32;
    FfnWeights w = random_ffn(rng, d, df, 0.3f);
    auto x = random_x(rng, d);
    for (float tau : {0.0f, 0.05f, 0.2f}) {
        FlopCounter fc;
        FfnCallRecord rec;
        sparse_ffn_forward(x, w, tau, &fc, FlopCategory::ffn, &rec);
        const int active = rec.channels - rec.pruned;
        CHECK(fc.get(FlopCategory::ffn) == 2ull * d * df + 4ull * d * active);
    }
}

TEST_CASE("mean_ffn_sparsity: averages call records") {
    std::vector<FfnCallRecord> recs{{2, 10}, {4, 10}};
    CHECK(mean_ffn_sparsity(recs) == doctest::Approx(0.3));
    std::vector<FfnCallRecord> none;
    CHECK_THROWS_AS(mean_ffn_sparsity(none), ConfigError);
}
