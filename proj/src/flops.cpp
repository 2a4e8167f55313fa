#include "sv/flops.hpp"

#include <string>

#include "sv/error.hpp"

namespace sv {

void FlopsParams::validate() const {
    auto need = [](long long v, const char* what) {
        if (v < 1) throw ConfigError(std::string("FlopsParams: ") + what + " must be >= 1");
    };
    need(batch, "batch");
    need(tokens, "tokens");
    need(hidden, "hidden");
    need(ffn_hidden, "ffn_hidden");
    need(expert_hidden, "expert_hidden");
    need(experts, "experts");
    need(active, "active");
    need(layers, "layers");
    if (active > experts) throw ConfigError("FlopsParams: active exceeds experts");
    auto frac = [](double s, const char* what) {
        if (!(s >= 0.0 && s <= 1.0))
            throw ConfigError(std::string("FlopsParams: ") + what + " must be in [0,1]");
    };
    frac(s_a, "s_a");
    frac(s_f, "s_f");
    frac(s_e, "s_e");
}

double attention_flops(const FlopsParams& p, bool sparse) {
    p.validate();
    const double B = double(p.batch), T = double(p.tokens), d = double(p.hidden);
    const double quad = sparse ? (1.0 - p.s_a) * T * T : T * T;
    return 6.0 * B * T * d * d + 4.0 * B * quad * d;
}

double ffn_flops(const FlopsParams& p, bool sparse) {
    p.validate();
    const double B = double(p.batch), T = double(p.tokens);
    const double d = double(p.hidden), df = double(p.ffn_hidden);
    if (!sparse) return 6.0 * B * T * d * df;
    return 2.0 * B * T * d * df * (3.0 - 2.0 * p.s_f);
}

static double moe_row(const FlopsParams& p, bool sparse, double expert_factor) {
    const double B = double(p.batch), T = double(p.tokens), d = double(p.hidden);
    const double de = double(p.expert_hidden), E = double(p.experts), k = double(p.active);
    const double keep = sparse ? 1.0 - p.s_e : 1.0;
    return expert_factor * B * T * keep * k * d * de + 2.0 * B * T * d * E;
}

double moe_flops(const FlopsParams& p, bool sparse) {
    p.validate();
    return moe_row(p, sparse, 4.0);
}

double moe_flops_gated(const FlopsParams& p, bool sparse) {
    p.validate();
    return moe_row(p, sparse, 6.0);
}

const ComponentCheck& FlopsBreakdown::component(const std::string& name) const {
    for (const auto& c : components)
        if (c.name == name) return c;
    throw InputError("FlopsBreakdown: unknown component " + name);
}

FlopsBreakdown reconcile(const SessionTrace& trace, const FlopCounter& counter,
                         const ModelConfig& cfg) {
    cfg.validate();
    const std::uint64_t d = std::uint64_t(cfg.hidden);
    const std::uint64_t kv = std::uint64_t(cfg.kv_dim());
    const std::uint64_t hd = std::uint64_t(cfg.head_dim);
    const std::uint64_t group = std::uint64_t(cfg.num_query_heads / cfg.num_kv_heads);
    const std::uint64_t df = std::uint64_t(cfg.ffn_hidden);
    const std::uint64_t de = std::uint64_t(cfg.expert_hidden);
    const std::uint64_t E = std::uint64_t(cfg.num_experts);
    const std::uint64_t k = std::uint64_t(cfg.active_experts);
    const std::uint64_t V = std::uint64_t(cfg.vocab);
    const std::uint64_t L = std::uint64_t(cfg.num_layers);
    std::uint64_t n_dense = 0, n_moe = 0;
    for (int l = 0; l < cfg.num_layers; ++l)
        (cfg.kind(l) == LayerKind::dense ? n_dense : n_moe) += 1;

    const std::uint64_t tp = std::uint64_t(trace.prefill_tokens);
    const std::uint64_t adv = std::uint64_t(trace.advance_keys.size());
    std::uint64_t verify_rows = 0;
    for (const auto& st : trace.steps) verify_rows += std::uint64_t(st.rows);
    const std::uint64_t rows_all = tp + adv + verify_rows;

    const std::uint64_t a_proj = rows_all * L * (4 * d * d + 4 * d * kv);

    // one causal pass over the prompt, then one full-cache scan per advance,
    // then per verify step the shared retained set plus staged ancestors
    std::uint64_t a_score = L * 2 * d * tp * (tp + 1);
    for (long long keys : trace.advance_keys) a_score += L * 4 * d * std::uint64_t(keys);
    for (const auto& st : trace.steps) {
        std::uint64_t anc = 0;
        for (int a : st.row_ancestors) anc += std::uint64_t(a);
        for (long long ret : st.retained_keys)
            a_score += 4 * hd * group * std::uint64_t(ret) * std::uint64_t(st.rows);
        a_score += L * 4 * d * anc;
    }

    std::uint64_t a_ffn = (tp + adv) * n_dense * 6 * d * df;
    for (const auto& rec : trace.ffn_calls)
        a_ffn += 2 * d * df + 4 * d * std::uint64_t(rec.channels - rec.pruned);

    std::uint64_t a_moe = (tp + adv) * n_moe * k * 6 * d * de;
    for (const auto& rec : trace.expert_ffn_calls)
        a_moe += 2 * d * de + 4 * d * std::uint64_t(rec.channels - rec.pruned);

    const std::uint64_t a_router = rows_all * n_moe * 2 * d * E;

    const std::uint64_t head_calls = (tp > 0 ? 1 : 0) + adv + verify_rows;
    const std::uint64_t a_other = head_calls * 2 * V * d;

    FlopsBreakdown out;
    auto put = [&](FlopCategory c, std::uint64_t analytical, std::string note) {
        ComponentCheck cc;
        cc.name = flop_category_name(c);
        cc.analytical = analytical;
        cc.instrumented = counter.get(c);
        const double a = double(analytical), i = double(cc.instrumented);
        cc.deviation = (a > i ? a - i : i - a) / (a > 1.0 ? a : 1.0);
        cc.note = std::move(note);
        out.components.push_back(std::move(cc));
    };
    put(FlopCategory::attn_proj, a_proj, "");
    put(FlopCategory::attn_score, a_score,
        "verification scores T*L_seq cache keys plus intra-tree ancestor pairs; "
        "the summary row's T^2 term assumes plain autoregressive decoding");
    put(FlopCategory::ffn, a_ffn, "");
    put(FlopCategory::moe_expert, a_moe,
        "gated experts cost 6*d*d_e per executed expert where the summary row "
        "prints 4*d*d_e");
    put(FlopCategory::moe_router, a_router, "");
    put(FlopCategory::other, a_other, "");

    for (const auto& c : out.components) {
        out.analytical_total += c.analytical;
        out.instrumented_total += c.instrumented;
    }
    const double at = double(out.analytical_total), it = double(out.instrumented_total);
    out.total_deviation = (at > it ? at - it : it - at) / (at > 1.0 ? at : 1.0);
    return out;
}

} // namespace sv
