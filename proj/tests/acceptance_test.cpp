/* End-to-end acceptance run: eleven criteria, one [PASS]/[FAIL] line each,
 * nonzero exit if any fail. Each criterion is independent; a thrown
 * exception fails only its own criterion. */

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sv/error.hpp"
#include "sv/flops.hpp"
#include "sv/harness.hpp"
#include "sv/retrieval_reuse.hpp"
#include "sv/rng.hpp"
#include "sv/sparse_attention.hpp"
#include "sv/sparse_ffn.hpp"
#include "sv/sparse_moe.hpp"

using namespace sv;
namespace fs = std::filesystem;

namespace {

struct Result {
    bool ok = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::vector<int> pattern_prompt(int n, int vocab, int salt) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[std::size_t(i)] = int((11 * i + salt) % vocab);
    return p;
}

/* hand-built chain tree; q values only need to be legal for validate() */
DraftTree chain_tree(const std::vector<int>& tokens, int vocab) {
    DraftTree t;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        DraftNode n;
        n.parent = int(i) - 1;
        n.token = tokens[i];
        n.q = 0.5f;
        t.nodes.push_back(n);
        t.node_dist.emplace_back(std::size_t(vocab), 1.0f / float(vocab));
    }
    return t;
}

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("sv_acceptance_" + name);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/* ---------------------------------------------------------------- 1 */

Result c1_losslessness() {
    ExperimentConfig cfg;
    cfg.target.config.vocab = 32; // toy defaults otherwise
    cfg.target.init_seed = 7;
    cfg.seed = 1;
    cfg.draft_len = 3;
    cfg.inline_prompt = {3, 1, 4, 1, 5, 9, 2, 6};
    cfg.lossless_threshold = 0.01;

    std::ostringstream sink;
    const long long trials = 200000;

    auto t0 = std::chrono::steady_clock::now();
    const LosslessReport self = cmd_lossless(cfg, trials, sink);
    const double self_s = seconds_since(t0);

    cfg.draft_mode = DraftMode::adversarial;
    t0 = std::chrono::steady_clock::now();
    const LosslessReport adv = cmd_lossless(cfg, trials, sink);
    const double adv_s = seconds_since(t0);

    Result r;
    r.ok = self.pass && adv.pass && self_s < 300.0 && adv_s < 300.0;
    r.detail = "tv=" + num(self.tv) + " (" + num(self_s) + "s), adversarial tv=" +
               num(adv.tv) + " (" + num(adv_s) + "s), threshold 0.01 at 200k trials";
    return r;
}

/* ---------------------------------------------------------------- 2 */

Result c2_self_draft_certainty() {
    Result r;
    r.ok = true;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        for (int plen : {8, 16}) {
            ExperimentConfig cfg;
            cfg.target.init_seed = 11;
            cfg.seed = seed;
            cfg.draft_len = 3;
            cfg.max_tokens = 40;
            cfg.inline_prompt = pattern_prompt(plen, cfg.target.config.vocab, int(seed));
            auto w = cfg.target.load();
            SessionOptions opts;
            opts.tracing = true;
            Session target(w, SparsityPlan{}, opts);
            auto draft = cfg.make_draft(w, w);
            Rng rng(seed);
            const DecodeResult res =
                decode(target, *draft, cfg.inline_prompt, cfg.decode_config(), rng);
            if (res.stats.alpha() != 4.0) r.ok = false;
            if (res.stats.emitted != 4 * res.stats.steps) r.ok = false;
        }
    }
    r.detail = "alpha = 4.0 exactly for K=3 over 3 seeds x 2 prompt lengths";
    return r;
}

/* ---------------------------------------------------------------- 3 */

Result c3_zero_sparsity_equivalence() {
    ModelConfig mc;
    mc.layer_kinds = {LayerKind::dense, LayerKind::moe, LayerKind::dense,
                      LayerKind::moe};
    auto w = init_weights(mc, 5);

    /* every switch active, every value inert: tau=0, m=0, L_seq <= L0 */
    SparsityPlan inert;
    AttnPlan ap;
    ap.cfg.base_length = 4096;
    ap.cfg.rho = 0.5;
    ap.cfg.block_size = mc.block_size;
    inert.attention = ap;
    inert.ffn_tau = 0.0f;
    MoEPlan mp;
    mp.map.k = mc.active_experts;
    mp.map.calib_tokens = 1;
    mp.map.layer_beta = {{1, {0.3}}, {3, {0.3}}};
    mp.budget_m = 0;
    inert.moe = mp;

    const std::vector<int> prompt = pattern_prompt(24, mc.vocab, 3);

    Session dense_probe(w, SparsityPlan{});
    Session inert_probe(w, inert);
    const auto dense_logits = dense_probe.prefill(prompt);
    const auto inert_logits = inert_probe.prefill(prompt);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < dense_logits.size(); ++i)
        max_diff = std::max(max_diff,
                            double(std::fabs(dense_logits[i] - inert_logits[i])));

    const DraftTree tree = chain_tree({5, 6, 7}, mc.vocab);
    const VerifyOutput vd = dense_probe.verify_forward(tree);
    const VerifyOutput vi = inert_probe.verify_forward(tree);
    for (std::size_t i = 0; i < vd.node_logits.data.size(); ++i)
        max_diff = std::max(
            max_diff, double(std::fabs(vd.node_logits.data[i] - vi.node_logits.data[i])));

    bool tokens_equal = true;
    for (std::uint64_t seed : {4ULL, 9ULL}) {
        DecodeConfig dc;
        dc.max_tokens = 24;
        dc.draft_len = 3;
        std::vector<int> toks[2];
        const SparsityPlan* plans[2] = {nullptr, &inert};
        const SparsityPlan all_off;
        plans[0] = &all_off;
        for (int v = 0; v < 2; ++v) {
            SessionOptions opts;
            opts.tracing = true;
            Session target(w, *plans[v], opts);
            ModelDraft draft(w, dc.temperature);
            Rng rng(seed);
            toks[v] = decode(target, draft, prompt, dc, rng).tokens;
        }
        if (toks[0] != toks[1]) tokens_equal = false;
    }

    Result r;
    r.ok = max_diff <= 1e-6 && tokens_equal;
    r.detail = "max logit diff " + num(max_diff) +
               " (<= 1e-6), identical tokens over 2 seeds";
    return r;
}

/* ---------------------------------------------------------------- 4 */

Result c4_table_identities() {
    Result r;
    r.ok = true;

    FlopsParams hand;
    hand.batch = 1;
    hand.tokens = 2;
    hand.hidden = 4;
    if (attention_flops(hand, false) != 256.0) r.ok = false;

    Rng rng(404);
    const auto draw = [&rng](long long lo, long long hi) {
        return lo + (long long)(rng.next_u64() % std::uint64_t(hi - lo + 1));
    };
    for (int i = 0; i < 100; ++i) {
        FlopsParams p;
        p.batch = draw(1, 4);
        p.tokens = draw(1, 64);
        p.hidden = draw(1, 128);
        p.ffn_hidden = draw(1, 256);
        p.expert_hidden = draw(1, 256);
        p.experts = draw(1, 8);
        p.active = draw(1, p.experts);
        p.s_a = 0.0;
        p.s_f = 0.0;
        p.s_e = 0.0;
        /* s = 0: sparse forms coincide with dense, exactly */
        if (ffn_flops(p, true) != ffn_flops(p, false)) r.ok = false;
        if (moe_flops(p, true) != moe_flops(p, false)) r.ok = false;
        if (attention_flops(p, true) != attention_flops(p, false)) r.ok = false;

        /* s = 1 limits match the closed forms */
        const double B = double(p.batch), T = double(p.tokens), d = double(p.hidden);
        p.s_a = 1.0;
        p.s_f = 1.0;
        p.s_e = 1.0;
        if (attention_flops(p, true) != 6.0 * B * T * d * d) r.ok = false;
        if (ffn_flops(p, true) != 2.0 * B * T * d * double(p.ffn_hidden)) r.ok = false;
        if (moe_flops(p, true) != 2.0 * B * T * d * double(p.experts)) r.ok = false;
    }
    r.detail = "hand value 256; s=0 coincidence and s=1 limits exact on 100 draws";
    return r;
}

/* ---------------------------------------------------------------- 5 */

/* attn_score delta of one verify pass, cache-key term vs ancestor term */
struct VerifyCost {
    std::uint64_t delta = 0;
    long long retained_pairs = 0; // (kv head, key) pairs, summed over layers
    long long anc_sum = 0;        // ancestor counts, summed over rows
    long long block_pairs = 0;    // (head, block) pairs from the masks
};

VerifyCost measure_verify(std::shared_ptr<const Weights> w, const SparsityPlan& plan,
                          const std::vector<int>& prompt, const DraftTree& tree) {
    SessionOptions opts;
    opts.tracing = true;
    Session s(w, plan, opts);
    s.prefill(prompt);
    const std::uint64_t before = s.counter().get(FlopCategory::attn_score);
    s.verify_forward(tree);
    VerifyCost out;
    out.delta = s.counter().get(FlopCategory::attn_score) - before;
    const StepTrace& st = s.trace().steps.front();
    for (long long k : st.retained_keys) out.retained_pairs += k;
    for (int a : st.row_ancestors) out.anc_sum += a;
    for (const auto& m : st.masks)
        if (m) out.block_pairs += m->total_retained();
    return out;
}

Result c5_attention_reduction() {
    ModelConfig mc; // d=64, H=2, n_h=4, hd=16, block 16
    auto w = init_weights(mc, 13);
    const DraftTree tree = chain_tree({1, 2, 3, 4}, mc.vocab);
    const long long rows = 4;
    const long long L = mc.num_layers, H = mc.num_kv_heads, d = mc.hidden;
    const long long hd = mc.head_dim, group = mc.num_query_heads / mc.num_kv_heads;

    SparsityPlan sparse;
    AttnPlan ap;
    ap.cfg.base_length = 64;
    ap.cfg.rho = 0.5;
    ap.cfg.block_size = mc.block_size;
    sparse.attention = ap;

    Result r;
    r.ok = true;
    std::string parts;
    for (int plen : {160, 152}) { // block-aligned and partial-tail cache
        const std::vector<int> prompt = pattern_prompt(plen, mc.vocab, 1);
        const VerifyCost sp = measure_verify(w, sparse, prompt, tree);
        const VerifyCost dn = measure_verify(w, SparsityPlan{}, prompt, tree);
        if (sp.anc_sum != dn.anc_sum) r.ok = false;

        /* dense delta decomposes as 4d(rows L_seq + anc) per layer */
        const std::uint64_t anc_term = std::uint64_t(4 * d * L * sp.anc_sum);
        const std::uint64_t dense_expect =
            std::uint64_t(4 * d * L * (rows * plen + sp.anc_sum));
        if (dn.delta != dense_expect) r.ok = false;

        const std::uint64_t sparse_cache = sp.delta - anc_term;
        const std::uint64_t dense_cache = dn.delta - anc_term;

        /* exact: sparse/dense == retained pairs / all pairs */
        const bool exact =
            sparse_cache * std::uint64_t(L * H * plen) ==
            dense_cache * std::uint64_t(sp.retained_pairs);
        if (!exact) r.ok = false;

        /* block-count ratio lands within one block per kv head per layer */
        const double block_r =
            double(sp.block_pairs * mc.block_size) / double(L * H * plen);
        const double tolerance = double(4 * hd * group * rows * L * H * mc.block_size);
        if (std::fabs(double(sparse_cache) - block_r * double(dense_cache)) >
            tolerance)
            r.ok = false;

        parts += (parts.empty() ? "" : "; ") + std::string("L_seq=") +
                 std::to_string(plen) + " r=" +
                 num(double(sp.retained_pairs) / double(L * H * plen));
    }
    r.detail = "verify attn_score = r * dense exactly (" + parts + ")";
    return r;
}

/* ---------------------------------------------------------------- 6 */

Result c6_sparse_ffn_oracle() {
    Rng rng(606);
    const int d = 16, d_f = 32;
    const float taus[3] = {0.01f, 0.05f, 0.1f};

    const auto rand_vec = [&rng](int n) {
        std::vector<float> v(static_cast<std::size_t>(n));
        for (float& x : v) x = rng.uniform_float(-1.0f, 1.0f);
        return v;
    };
    const auto rand_mat = [&](int rows, int cols) {
        Matrix m(rows, cols);
        for (float& x : m.data) x = rng.uniform_float(-0.5f, 0.5f);
        return m;
    };

    Result r;
    r.ok = true;
    double mean_sparsity[3] = {0, 0, 0};
    const int cases = 1000;
    for (int c = 0; c < cases; ++c) {
        FfnWeights w;
        w.w_gate = rand_mat(d_f, d);
        w.w_up = rand_mat(d_f, d);
        w.w_down = rand_mat(d_f, d);
        w.b_gate = rand_vec(d_f);
        w.b_up = rand_vec(d_f);
        w.b_down = rand_vec(d);
        const std::vector<float> x = rand_vec(d);

        /* gate activations drive both the oracle and the selection */
        std::vector<float> h(static_cast<std::size_t>(d_f));
        for (int i = 0; i < d_f; ++i)
            h[std::size_t(i)] =
                silu(float(dot_f32(w.w_gate.row(i), x.data(), d)) +
                     w.b_gate[std::size_t(i)]);

        std::size_t prev_pruned = 0;
        for (int t = 0; t < 3; ++t) {
            const float tau = taus[t];
            FfnCallRecord rec;
            const std::vector<float> sparse =
                sparse_ffn_forward(x, w, tau, nullptr, FlopCategory::ffn, &rec);

            /* dense with pruned channels forced to zero */
            std::vector<float> oracle = w.b_down;
            for (int i = 0; i < d_f; ++i) {
                if (std::fabs(h[std::size_t(i)]) < tau) continue;
                const float u = float(dot_f32(w.w_up.row(i), x.data(), d)) +
                                w.b_up[std::size_t(i)];
                const float a = h[std::size_t(i)] * u;
                const float* down = w.w_down.row(i);
                for (int j = 0; j < d; ++j) oracle[std::size_t(j)] += a * down[j];
            }
            for (int j = 0; j < d; ++j)
                if (std::fabs(sparse[std::size_t(j)] - oracle[std::size_t(j)]) > 1e-5f)
                    r.ok = false;

            /* pruned sets are nested in tau */
            const ChannelSelection sel = select_channels(h, tau);
            if (sel.pruned.size() < prev_pruned) r.ok = false;
            prev_pruned = sel.pruned.size();
            if (rec.pruned != int(sel.pruned.size())) r.ok = false;
            mean_sparsity[t] += sel.sparsity();
        }
    }
    for (int t = 0; t < 2; ++t)
        if (mean_sparsity[t] > mean_sparsity[t + 1]) r.ok = false;
    r.detail = "1000 cases within 1e-5; mean s_f " + num(mean_sparsity[0] / cases) +
               " -> " + num(mean_sparsity[1] / cases) + " -> " +
               num(mean_sparsity[2] / cases) + " over tau 0.01/0.05/0.1";
    return r;
}

/* ---------------------------------------------------------------- 7 */

Result c7_sparse_moe_oracles() {
    Rng rng(707);
    Result r;
    r.ok = true;
    const int ks[3] = {2, 4, 8};
    for (int c = 0; c < 10000; ++c) {
        const int k = ks[c % 3];
        /* softmax over random logits, ascending */
        std::vector<float> logits(static_cast<std::size_t>(k));
        for (float& v : logits) v = rng.uniform_float(-3.0f, 3.0f);
        std::vector<float> ws = softmax(logits);
        std::sort(ws.begin(), ws.end());
        RoutedExperts routed;
        routed.weights = ws;
        for (int i = 0; i < k; ++i) routed.ids.push_back((7 * i + c) % 64);

        const int m = 1 + int(rng.next_u64() % std::uint64_t(k - 1));
        std::vector<double> beta(static_cast<std::size_t>(k - 1));
        for (double& b : beta) b = rng.uniform_float(0.05f, 0.95f);

        /* brute-force level scan straight off the definition */
        double total = 0.0;
        for (float v : ws) total += double(v);
        int expect = 0;
        for (int i = 1; i <= m; ++i) {
            double small = 0.0;
            for (int j = 0; j < k - i; ++j) small += double(ws[std::size_t(j)]);
            if (small / total < beta[std::size_t(i - 1)]) expect = i;
        }

        const ExpertSelection sel = decide_skip(routed, beta, m);
        if (sel.i_star != expect) r.ok = false;
        if (sel.i_star > m) r.ok = false;
        const auto kept = sel.kept_ids();
        if (std::find(kept.begin(), kept.end(), routed.ids.back()) == kept.end())
            r.ok = false; // top-weight expert always survives

        if (k == 2) {
            const bool skip = double(ws[0]) / total < beta[0];
            if (sel.i_star != (skip ? 1 : 0)) r.ok = false;
        }
    }

    /* calibrated maps: beta_m non-increasing in m */
    std::map<int, std::vector<std::vector<float>>> stream;
    for (int t = 0; t < 200; ++t) {
        std::vector<float> logits(4);
        for (float& v : logits) v = rng.uniform_float(-2.0f, 2.0f);
        std::vector<float> ws = softmax(logits);
        std::sort(ws.begin(), ws.end());
        stream[0].push_back(ws);
        stream[2].push_back(ws);
    }
    const ThresholdMap map = build_threshold_map(stream, 4, 3);
    for (const auto& [layer, beta] : map.layer_beta)
        for (std::size_t i = 0; i + 1 < beta.size(); ++i)
            if (beta[i] < beta[i + 1]) r.ok = false;

    r.detail = "decide_skip == brute force on 10k vectors (k in {2,4,8}); "
               "beta maps non-increasing in m";
    return r;
}

/* ---------------------------------------------------------------- 8 */

Result c8_anchor_reuse_oracles() {
    Rng rng(808);
    Result r;
    r.ok = true;

    for (int c = 0; c < 1000; ++c) {
        const int L = 4 + int(rng.next_u64() % 9);
        std::vector<double> sims(static_cast<std::size_t>(L));
        sims[0] = 0.0;
        for (int i = 1; i < L; ++i) sims[std::size_t(i)] = rng.uniform();
        const int K = 1 + int(rng.next_u64() % std::uint64_t(L));

        /* full-sort oracle: K largest 1-J, ties to the lower layer */
        std::vector<int> order(static_cast<std::size_t>(L));
        for (int i = 0; i < L; ++i) order[std::size_t(i)] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (sims[std::size_t(a)] != sims[std::size_t(b)])
                return sims[std::size_t(a)] < sims[std::size_t(b)];
            return a < b;
        });
        std::vector<int> expect(order.begin(), order.begin() + K);
        for (int& v : expect) ++v; // 1-based
        std::sort(expect.begin(), expect.end());

        const AnchorSet got = select_anchors(sims, K);
        if (got.anchors != expect) r.ok = false;
        if (!got.is_anchor(1)) r.ok = false;
    }

    /* K_anchor = L reproduces no-reuse sparse attention bit-exactly */
    ModelConfig mc;
    auto w = init_weights(mc, 17);
    const std::vector<int> prompt = pattern_prompt(160, mc.vocab, 2);
    const DraftTree tree = chain_tree({9, 8, 7}, mc.vocab);

    AttnSparsityConfig attn;
    attn.base_length = 64;
    attn.rho = 0.5;
    attn.block_size = mc.block_size;

    AnchorSet all;
    all.num_layers = mc.num_layers;
    for (int l = 1; l <= mc.num_layers; ++l) all.anchors.push_back(l);

    SparsityPlan with_anchors, no_anchors;
    with_anchors.attention = AttnPlan{attn, all};
    no_anchors.attention = AttnPlan{attn, std::nullopt};

    SessionOptions opts;
    opts.tracing = true;
    Session sa(w, with_anchors, opts), sb(w, no_anchors, opts);
    sa.prefill(prompt);
    sb.prefill(prompt);
    const VerifyOutput va = sa.verify_forward(tree);
    const VerifyOutput vb = sb.verify_forward(tree);
    if (va.node_logits.data != vb.node_logits.data) r.ok = false;
    if (va.attach_logits != vb.attach_logits) r.ok = false;

    /* M_l = M_{a(l)} in a logged run with anchors {1, 3} */
    AnchorSet skip13;
    skip13.num_layers = mc.num_layers;
    skip13.anchors = {1, 3};
    SparsityPlan reuse_plan;
    reuse_plan.attention = AttnPlan{attn, skip13};
    Session sc(w, reuse_plan, opts);
    sc.prefill(prompt);
    sc.verify_forward(tree);
    const StepTrace& st = sc.trace().steps.front();
    const auto reused_from = [&](int layer0, int anchor0) {
        if (!st.masks[std::size_t(layer0)] || !st.masks[std::size_t(anchor0)])
            return false;
        return st.masks[std::size_t(layer0)]->same_sets(
                   *st.masks[std::size_t(anchor0)]) &&
               st.masks[std::size_t(layer0)]->provenance ==
                   BlockMask::Provenance::reused &&
               st.masks[std::size_t(anchor0)]->provenance ==
                   BlockMask::Provenance::retrieved;
    };
    if (!reused_from(1, 0)) r.ok = false;
    if (!reused_from(3, 2)) r.ok = false;

    r.detail = "sort oracle on 1000 vectors; K=L bit-exact; M_l = M_a(l) in the log";
    return r;
}

/* ---------------------------------------------------------------- 9 */

Result c9_overlap_analysis() {
    Rng rng(909);
    Result r;
    r.ok = true;

    const int num_blocks = 12;
    const auto random_mask = [&](int heads, const std::vector<int>& per_head) {
        BlockMask m;
        m.head_blocks.resize(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            std::set<int> pick;
            while (int(pick.size()) < per_head[std::size_t(h)])
                pick.insert(int(rng.next_u64() % num_blocks));
            m.head_blocks[std::size_t(h)].assign(pick.begin(), pick.end());
        }
        return m;
    };
    for (int c = 0; c < 500; ++c) {
        const int heads = 1 + int(rng.next_u64() % 4);
        std::vector<int> per_head(static_cast<std::size_t>(heads));
        for (int& n : per_head) n = 1 + int(rng.next_u64() % 8);
        const BlockMask a = random_mask(heads, per_head);
        const BlockMask b = random_mask(heads, per_head);
        const double oab = overlap_ratio(a, b);
        if (overlap_ratio(a, a) != 1.0) r.ok = false;
        if (oab != overlap_ratio(b, a)) r.ok = false;
        if (oab < 0.0 || oab > 1.0) r.ok = false;
    }

    /* cmd_overlap == offline recomputation from the mask logs */
    ExperimentConfig cfg;
    cfg.target.init_seed = 23;
    cfg.seed = 31;
    cfg.max_tokens = 12;
    cfg.tree_template = {2, 2};
    cfg.plan.rho = 0.5;
    cfg.plan.base_length = 64;
    cfg.inline_prompt = pattern_prompt(150, cfg.target.config.vocab, 4);

    std::ostringstream out;
    cmd_overlap(cfg, 8, out);

    auto w = cfg.target.load();
    SessionOptions opts;
    opts.tracing = true;
    opts.row_mask_diagnostics = true;
    Session target(w, cfg.plan.resolve(w->config), opts);
    auto draft = cfg.make_draft(w, w);
    Rng drng(cfg.seed);
    decode(target, *draft, cfg.inline_prompt, cfg.decode_config(), drng);

    std::map<std::pair<int, int>, std::pair<double, long long>> acc;
    for (const auto& st : target.trace().steps) {
        const std::size_t off = st.had_pending ? 1 : 0;
        for (std::size_t l = 0; l < st.row_masks.size(); ++l) {
            const auto& rows = st.row_masks[l];
            for (std::size_t a = off; a < rows.size(); ++a)
                for (std::size_t b = a + 1; b < rows.size(); ++b) {
                    auto& slot = acc[{int(l) + 1,
                                      std::abs(st.row_positions[a] -
                                               st.row_positions[b])}];
                    slot.first += overlap_ratio(rows[a], rows[b]);
                    slot.second += 1;
                }
        }
    }
    if (acc.empty()) r.ok = false;
    std::ostringstream expect;
    expect << "layer,distance,mean_overlap\n";
    for (const auto& [key, slot] : acc) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.10g", slot.first / double(slot.second));
        expect << key.first << ',' << key.second << ',' << buf << '\n';
    }
    if (out.str() != expect.str()) r.ok = false;

    r.detail = "identity/symmetry/range on 500 fuzzed masks; CSV equals log replay";
    return r;
}

/* --------------------------------------------------------------- 10 */

Result c10_piecewise_budget() {
    Result r;
    r.ok = true;

    AttnSparsityConfig cfg;
    cfg.base_length = 1024;
    cfg.rho = 0.5;
    cfg.block_size = 16;
    const int H = 2;

    if (compute_budget(1024, cfg, H).has_value()) r.ok = false; // boundary: full
    if (compute_budget(512, cfg, H).has_value()) r.ok = false;
    if (!compute_budget(1025, cfg, H).has_value()) r.ok = false;

    const auto b = compute_budget(3072, cfg, H);
    if (!b || *b != 256) r.ok = false; // ((3072-1024)*0.5+1024)*2/16

    AttnSparsityConfig full = cfg;
    full.rho = 1.0; // function-level limit
    const long long num_blocks = (3072 + 15) / 16;
    const auto all = compute_budget(3072, full, H);
    if (!all || *all != H * num_blocks) r.ok = false;

    r.detail = "full at L_seq <= L0 (boundary included); hand value 256; "
               "rho=1 keeps every block";
    return r;
}

/* --------------------------------------------------------------- 11 */

Result c11_determinism_roundtrips() {
    Result r;
    r.ok = true;

    ExperimentConfig cfg;
    cfg.target.init_seed = 29;
    cfg.seed = 12;
    cfg.max_tokens = 12;
    cfg.inline_prompt = pattern_prompt(40, cfg.target.config.vocab, 6);
    cfg.plan.tau = 0.02f;
    BenchVariant strict, sparse;
    strict.name = "strict";
    sparse.name = "sparse";
    sparse.plan = cfg.plan;
    cfg.variants = {strict, sparse};

    std::ostringstream g1, g2, b1, b2, f1, f2;
    cmd_generate(cfg, g1);
    cmd_generate(cfg, g2);
    if (g1.str() != g2.str() || g1.str().empty()) r.ok = false;
    cmd_bench(cfg, b1);
    cmd_bench(cfg, b2);
    if (b1.str() != b2.str()) r.ok = false;
    cmd_flops(cfg.target.config, 8, 0.5, 0.5, 0.5, f1);
    cmd_flops(cfg.target.config, 8, 0.5, 0.5, 0.5, f2);
    if (f1.str() != f2.str()) r.ok = false;

    /* weight file round-trip, bitwise */
    ModelConfig mc;
    mc.num_layers = 2;
    mc.layer_kinds = {LayerKind::dense, LayerKind::moe};
    auto w = init_weights(mc, 31);
    const fs::path wf1 = temp_file("w1.svwt"), wf2 = temp_file("w2.svwt");
    save_weights(wf1.string(), *w);
    auto loaded = load_weights(wf1.string());
    save_weights(wf2.string(), *loaded);
    if (slurp(wf1) != slurp(wf2)) r.ok = false;
    bool tensors_equal = true;
    for_each_tensor(std::as_const(*w), [&](const std::string& name,
                                           const std::vector<float>& data,
                                           std::vector<int>) {
        for_each_tensor(std::as_const(*loaded),
                        [&](const std::string& n2, const std::vector<float>& d2,
                            std::vector<int>) {
                            if (n2 == name && d2 != data) tensors_equal = false;
                        });
    });
    if (!tensors_equal) r.ok = false;
    fs::remove(wf1);
    fs::remove(wf2);

    /* anchor / threshold json round-trips */
    AnchorSet anchors;
    anchors.num_layers = 4;
    anchors.anchors = {1, 3};
    const fs::path af = temp_file("a.json");
    save_json(af.string(), anchors_to_json(anchors));
    const AnchorSet a2 = anchors_from_json(load_json(af.string()));
    if (a2.anchors != anchors.anchors || a2.num_layers != anchors.num_layers)
        r.ok = false;
    if (anchors_to_json(a2) != load_json(af.string())) r.ok = false;
    fs::remove(af);

    ThresholdMap tm;
    tm.k = 2;
    tm.calib_tokens = 64;
    tm.layer_beta = {{1, {0.42}}, {3, {0.37}}};
    const fs::path tf = temp_file("t.json");
    save_json(tf.string(), thresholds_to_json(tm));
    const ThresholdMap t2 = thresholds_from_json(load_json(tf.string()));
    if (t2.k != tm.k || t2.calib_tokens != tm.calib_tokens ||
        t2.layer_beta != tm.layer_beta)
        r.ok = false;
    if (thresholds_to_json(t2) != load_json(tf.string())) r.ok = false;
    fs::remove(tf);

    r.detail = "byte-identical generate/bench/flops; svwt + json files bit-exact";
    return r;
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        Result (*run)();
    };
    const Criterion criteria[] = {
        {"losslessness", c1_losslessness},
        {"self-draft certainty", c2_self_draft_certainty},
        {"zero-sparsity equivalence", c3_zero_sparsity_equivalence},
        {"analytical cost identities", c4_table_identities},
        {"instrumented attention reduction", c5_attention_reduction},
        {"sparse-ffn oracle", c6_sparse_ffn_oracle},
        {"sparse-moe oracles", c7_sparse_moe_oracles},
        {"anchor/reuse oracles", c8_anchor_reuse_oracles},
        {"overlap analysis", c9_overlap_analysis},
        {"piecewise budget", c10_piecewise_budget},
        {"determinism and round-trips", c11_determinism_roundtrips},
    };

    int failures = 0;
    int idx = 0;
    for (const Criterion& c : criteria) {
        ++idx;
        Result res;
        try {
            res = c.run();
        } catch (const std::exception& e) {
            res.ok = false;
            res.detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] %2d %s: %s\n", res.ok ? "PASS" : "FAIL", idx, c.name,
                    res.detail.c_str());
        std::fflush(stdout);
        if (!res.ok) ++failures;
    }
    if (failures) std::printf("%d of 11 criteria failed\n", failures);
    else std::printf("all 11 criteria passed\n");
    return failures == 0 ? 0 : 1;
}
