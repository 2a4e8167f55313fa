#include "sv/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace sv {

bool ModelConfig::has_moe() const {
    for (LayerKind k : layer_kinds)
        if (k == LayerKind::moe) return true;
    return false;
}

void ModelConfig::validate() const {
    if (num_layers <= 0) throw ConfigError("ModelConfig: num_layers must be positive");
    if (hidden <= 0 || vocab <= 0 || ffn_hidden <= 0)
        throw ConfigError("ModelConfig: hidden, vocab and ffn_hidden must be positive");
    if (num_query_heads <= 0 || num_kv_heads <= 0)
        throw ConfigError("ModelConfig: head counts must be positive");
    if (num_query_heads % num_kv_heads != 0)
        throw ConfigError("ModelConfig: query heads must group evenly over KV heads");
    if (head_dim * num_query_heads != hidden)
        throw ConfigError("ModelConfig: head_dim * num_query_heads must equal hidden");
    if (head_dim % 2 != 0)
        throw ConfigError("ModelConfig: head_dim must be even for rotary pairs");
    if (!layer_kinds.empty() && int(layer_kinds.size()) != num_layers)
        throw ConfigError("ModelConfig: layer_kinds length must equal num_layers");
    if (has_moe()) {
        if (num_experts < 2) throw ConfigError("ModelConfig: MoE needs at least 2 experts");
        if (active_experts < 1 || active_experts > num_experts)
            throw ConfigError("ModelConfig: active_experts must lie in [1, num_experts]");
        if (expert_hidden <= 0) throw ConfigError("ModelConfig: expert_hidden must be positive");
    }
    if (block_size <= 0) throw ConfigError("ModelConfig: block_size must be positive");
    if (!(rope_base > 1.0f)) throw ConfigError("ModelConfig: rope_base must exceed 1");
}

static FfnWeights shaped_ffn(int channels, int d) {
    FfnWeights f;
    f.w_gate = Matrix(channels, d);
    f.w_up = Matrix(channels, d);
    f.w_down = Matrix(channels, d);
    f.b_gate.assign(std::size_t(channels), 0.0f);
    f.b_up.assign(std::size_t(channels), 0.0f);
    f.b_down.assign(std::size_t(d), 0.0f);
    return f;
}

Weights zero_weights(const ModelConfig& cfg) {
    cfg.validate();
    Weights w;
    w.config = cfg;
    w.embedding = Matrix(cfg.vocab, cfg.hidden);
    w.layers.resize(std::size_t(cfg.num_layers));
    for (int l = 0; l < cfg.num_layers; ++l) {
        LayerWeights& lw = w.layers[l];
        lw.attn_norm.assign(std::size_t(cfg.hidden), 0.0f);
        lw.ffn_norm.assign(std::size_t(cfg.hidden), 0.0f);
        lw.wq = Matrix(cfg.hidden, cfg.hidden);
        lw.wk = Matrix(cfg.kv_dim(), cfg.hidden);
        lw.wv = Matrix(cfg.kv_dim(), cfg.hidden);
        lw.wo = Matrix(cfg.hidden, cfg.hidden);
        if (cfg.kind(l) == LayerKind::dense) {
            lw.ffn = shaped_ffn(cfg.ffn_hidden, cfg.hidden);
        } else {
            lw.router = Matrix(cfg.num_experts, cfg.hidden);
            lw.experts.assign(std::size_t(cfg.num_experts),
                              shaped_ffn(cfg.expert_hidden, cfg.hidden));
        }
    }
    w.final_norm.assign(std::size_t(cfg.hidden), 0.0f);
    w.head = Matrix(cfg.vocab, cfg.hidden);
    return w;
}

void for_each_tensor(Weights& w,
                     const std::function<void(const std::string&, std::vector<float>&,
                                              std::vector<int>)>& fn) {
    const ModelConfig& cfg = w.config;
    auto mat = [&](const std::string& name, Matrix& m) {
        fn(name, m.data, {m.rows, m.cols});
    };
    auto vec = [&](const std::string& name, std::vector<float>& v) {
        fn(name, v, {int(v.size())});
    };
    auto ffn = [&](const std::string& p, FfnWeights& f) {
        mat(p + "w_gate", f.w_gate);
        vec(p + "b_gate", f.b_gate);
        mat(p + "w_up", f.w_up);
        vec(p + "b_up", f.b_up);
        mat(p + "w_down", f.w_down);
        vec(p + "b_down", f.b_down);
    };

    mat("embedding", w.embedding);
    for (int l = 0; l < cfg.num_layers; ++l) {
        LayerWeights& lw = w.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        vec(p + "attn_norm", lw.attn_norm);
        mat(p + "wq", lw.wq);
        mat(p + "wk", lw.wk);
        mat(p + "wv", lw.wv);
        mat(p + "wo", lw.wo);
        vec(p + "ffn_norm", lw.ffn_norm);
        if (cfg.kind(l) == LayerKind::dense) {
            ffn(p + "ffn.", lw.ffn);
        } else {
            mat(p + "router", lw.router);
            for (int e = 0; e < cfg.num_experts; ++e)
                ffn(p + "experts." + std::to_string(e) + ".", lw.experts[e]);
        }
    }
    vec("final_norm", w.final_norm);
    mat("head", w.head);
}

void for_each_tensor(const Weights& w,
                     const std::function<void(const std::string&,
                                              const std::vector<float>&,
                                              std::vector<int>)>& fn) {
    for_each_tensor(const_cast<Weights&>(w),
                    [&](const std::string& name, std::vector<float>& data,
                        std::vector<int> shape) { fn(name, data, std::move(shape)); });
}

std::shared_ptr<Weights> init_weights(const ModelConfig& cfg, std::uint64_t seed) {
    auto w = std::make_shared<Weights>(zero_weights(cfg));
    Rng rng(seed);
    const float bound = 1.0f / std::sqrt(float(cfg.hidden));
    for_each_tensor(*w, [&](const std::string& name, std::vector<float>& data,
                            std::vector<int>) {
        if (name.find("norm") != std::string::npos) {
            std::fill(data.begin(), data.end(), 1.0f);
        } else {
            for (float& v : data) v = rng.uniform_float(-bound, bound);
        }
    });
    return w;
}

void apply_rope(float* v, int head_dim, int pos, float base) {
    const int half = head_dim / 2;
    for (int c = 0; c < half; ++c) {
        const double theta =
            double(pos) * std::pow(double(base), -2.0 * double(c) / double(head_dim));
        const double cs = std::cos(theta), sn = std::sin(theta);
        const double a = v[c], b = v[c + half];
        v[c] = float(a * cs - b * sn);
        v[c + half] = float(a * sn + b * cs);
    }
}

Session::Session(std::shared_ptr<const Weights> weights, SparsityPlan plan,
                 SessionOptions opts)
    : weights_(std::move(weights)),
      plan_(std::move(plan)),
      opts_(opts),
      cache_(weights_->config.num_layers, weights_->config.num_kv_heads,
             weights_->config.head_dim, weights_->config.block_size) {
    const ModelConfig& cfg = weights_->config;
    cfg.validate();
    plan_.validate(cfg.num_layers);
    if (plan_.attention && plan_.attention->cfg.block_size != cfg.block_size)
        throw ConfigError("Session: attention plan block size differs from the cache");
    if (plan_.moe) {
        if (!cfg.has_moe())
            throw ConfigError("Session: MoE plan on a model without MoE layers");
        if (plan_.moe->map.k != cfg.active_experts)
            throw ConfigError("Session: threshold map k differs from active_experts");
    }
    staged_k_.resize(std::size_t(cfg.num_layers));
    staged_v_.resize(std::size_t(cfg.num_layers));
}

Matrix Session::embed(const std::vector<int>& tokens) const {
    const ModelConfig& cfg = weights_->config;
    Matrix x(int(tokens.size()), cfg.hidden);
    for (int r = 0; r < x.rows; ++r) {
        const int t = tokens[r];
        if (t < 0 || t >= cfg.vocab) throw InputError("Session: token id out of vocab");
        std::memcpy(x.row(r), weights_->embedding.row(t),
                    sizeof(float) * std::size_t(cfg.hidden));
    }
    return x;
}

std::vector<float> Session::head_logits(const float* h_row) {
    const ModelConfig& cfg = weights_->config;
    std::vector<float> n =
        rms_norm({h_row, std::size_t(cfg.hidden)}, weights_->final_norm);
    std::vector<float> out(std::size_t(cfg.vocab));
    for (int t = 0; t < cfg.vocab; ++t)
        out[t] = float(dot_f32(n.data(), weights_->head.row(t), cfg.hidden));
    counter_.add(FlopCategory::other, 2ull * std::uint64_t(cfg.vocab) * cfg.hidden);
    return out;
}

void Session::attend_row(int layer, const float* q_row, int cache_limit,
                         const BlockMask* mask, const Matrix* staged_k,
                         const Matrix* staged_v, const std::vector<int>* anc,
                         float* out) {
    const ModelConfig& cfg = weights_->config;
    const int hd = cfg.head_dim;
    const int group = cfg.num_query_heads / cfg.num_kv_heads;
    const double scale = 1.0 / std::sqrt(double(hd));

    std::vector<const float*> keys, vals;
    std::vector<double> score;
    std::vector<double> acc(static_cast<std::size_t>(hd));
    for (int g = 0; g < cfg.num_kv_heads; ++g) {
        keys.clear();
        vals.clear();
        if (mask) {
            for (int b : mask->head_blocks[g]) {
                const KVBlock& blk = cache_.block(layer, g, b);
                const int end = std::min(blk.first_pos + blk.count, cache_limit);
                for (int p = blk.first_pos; p < end; ++p) {
                    keys.push_back(blk.keys.data() + std::size_t(p - blk.first_pos) * hd);
                    vals.push_back(blk.values.data() + std::size_t(p - blk.first_pos) * hd);
                }
            }
        } else {
            for (int p = 0; p < cache_limit; ++p) {
                keys.push_back(cache_.key(layer, g, p));
                vals.push_back(cache_.value(layer, g, p));
            }
        }
        if (anc && staged_k) {
            for (int r : *anc) {
                keys.push_back(staged_k->row(r) + std::size_t(g) * hd);
                vals.push_back(staged_v->row(r) + std::size_t(g) * hd);
            }
        }
        if (keys.empty()) throw LogicError("Session: attention over an empty key set");

        for (int qh = g * group; qh < (g + 1) * group; ++qh) {
            const float* q = q_row + std::size_t(qh) * hd;
            score.resize(keys.size());
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < keys.size(); ++i) {
                score[i] = dot_f32(q, keys[i], hd) * scale;
                mx = std::max(mx, score[i]);
            }
            double sum = 0.0;
            for (double& s : score) {
                s = std::exp(s - mx);
                sum += s;
            }
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t i = 0; i < keys.size(); ++i) {
                const double w = score[i] / sum;
                const float* vv = vals[i];
                for (int c = 0; c < hd; ++c) acc[c] += w * double(vv[c]);
            }
            float* dst = out + std::size_t(qh) * hd;
            for (int c = 0; c < hd; ++c) dst[c] = float(acc[c]);
            counter_.add(FlopCategory::attn_score,
                         4ull * std::uint64_t(hd) * keys.size());
        }
    }
}

RoutedExperts Session::route_topk(std::span<const float> x, int layer) {
    const ModelConfig& cfg = weights_->config;
    if (cfg.kind(layer) != LayerKind::moe)
        throw LogicError("Session: route_topk on a dense layer");
    const LayerWeights& lw = weights_->layers[layer];
    const int E = cfg.num_experts;

    std::vector<float> logits(static_cast<std::size_t>(E));
    for (int e = 0; e < E; ++e)
        logits[e] = float(dot_f32(x.data(), lw.router.row(e), int(x.size())));
    counter_.add(FlopCategory::moe_router, 2ull * x.size() * std::uint64_t(E));

    std::vector<float> p = softmax(logits);
    std::vector<int> ids(static_cast<std::size_t>(E));
    std::iota(ids.begin(), ids.end(), 0);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        if (p[a] != p[b]) return p[a] > p[b];
        return a < b;
    });
    ids.resize(std::size_t(cfg.active_experts));
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        if (p[a] != p[b]) return p[a] < p[b];
        return a < b;
    });

    RoutedExperts out;
    for (int id : ids) {
        out.ids.push_back(id);
        out.weights.push_back(p[id]);
    }
    return out;
}

std::optional<BlockMask> Session::layer_mask(
    int layer, const Matrix& q_rows, long long budget,
    std::vector<std::optional<BlockMask>>& prev) {
    const ModelConfig& cfg = weights_->config;
    const AttnPlan& ap = *plan_.attention;
    const int lb = layer + 1; // anchor sets speak 1-based
    if (ap.anchors && !ap.anchors->is_anchor(lb)) {
        const int a = nearest_anchor(lb, *ap.anchors);
        if (!prev[a - 1])
            throw LogicError("Session: reuse source mask missing for layer " +
                             std::to_string(lb));
        BlockMask m = *prev[a - 1];
        m.provenance = BlockMask::Provenance::reused;
        return m;
    }
    Matrix q0(cfg.num_query_heads, cfg.head_dim);
    std::memcpy(q0.data.data(), q_rows.row(0), sizeof(float) * std::size_t(cfg.hidden));
    auto scores = score_blocks(cache_, layer, q0, ap.cfg);
    return select_blocks(scores, budget, ap.cfg, cache_.num_blocks());
}

Matrix Session::run_layers(const BatchLayout& b, bool append, bool sparse,
                           std::vector<std::optional<BlockMask>>* masks_out,
                           std::vector<long long>* retained_out,
                           std::vector<std::vector<BlockMask>>* row_masks_out) {
    const ModelConfig& cfg = weights_->config;
    const int T = int(b.tokens.size());
    const int d = cfg.hidden;
    const int hd = cfg.head_dim;
    const float tau = sparse ? plan_.effective_tau() : 0.0f;

    std::optional<long long> budget;
    if (sparse && plan_.attention)
        budget = compute_budget(cache_.seq_len(), plan_.attention->cfg,
                                cfg.num_kv_heads);

    Matrix x = embed(b.tokens);
    std::vector<std::optional<BlockMask>> masks(std::size_t(cfg.num_layers));
    if (row_masks_out) row_masks_out->assign(std::size_t(cfg.num_layers), {});

    for (int l = 0; l < cfg.num_layers; ++l) {
        const LayerWeights& lw = weights_->layers[l];

        Matrix xn(T, d);
        for (int r = 0; r < T; ++r) {
            auto nr = rms_norm({x.row(r), std::size_t(d)}, lw.attn_norm);
            std::memcpy(xn.row(r), nr.data(), sizeof(float) * std::size_t(d));
        }
        Matrix q = matmul_bt(xn, lw.wq, &counter_, FlopCategory::attn_proj);
        Matrix k = matmul_bt(xn, lw.wk, &counter_, FlopCategory::attn_proj);
        Matrix v = matmul_bt(xn, lw.wv, &counter_, FlopCategory::attn_proj);
        for (int r = 0; r < T; ++r) {
            for (int h = 0; h < cfg.num_query_heads; ++h)
                apply_rope(q.row(r) + std::size_t(h) * hd, hd, b.positions[r],
                           cfg.rope_base);
            for (int h = 0; h < cfg.num_kv_heads; ++h)
                apply_rope(k.row(r) + std::size_t(h) * hd, hd, b.positions[r],
                           cfg.rope_base);
        }

        const Matrix* sk = nullptr;
        const Matrix* sv = nullptr;
        if (append) {
            for (int r = 0; r < T; ++r)
                for (int h = 0; h < cfg.num_kv_heads; ++h)
                    cache_.write(l, h, b.positions[r],
                                 {k.row(r) + std::size_t(h) * hd, std::size_t(hd)},
                                 {v.row(r) + std::size_t(h) * hd, std::size_t(hd)});
        } else {
            staged_k_[l] = std::move(k);
            staged_v_[l] = std::move(v);
            sk = &staged_k_[l];
            sv = &staged_v_[l];
        }

        const BlockMask* mask = nullptr;
        if (budget) {
            masks[l] = layer_mask(l, q, *budget, masks);
            mask = &*masks[l];
            if (row_masks_out) {
                auto& per_row = (*row_masks_out)[l];
                Matrix qr(cfg.num_query_heads, hd);
                for (int r = 0; r < T; ++r) {
                    std::memcpy(qr.data.data(), q.row(r),
                                sizeof(float) * std::size_t(d));
                    auto sc = score_blocks(cache_, l, qr, plan_.attention->cfg);
                    per_row.push_back(select_blocks(sc, *budget, plan_.attention->cfg,
                                                    cache_.num_blocks()));
                }
            }
        }

        Matrix attn(T, d);
        for (int r = 0; r < T; ++r) {
            const int limit = append ? b.positions[r] + 1 : cache_.seq_len();
            const std::vector<int>* anc = append ? nullptr : &b.ancestors[r];
            attend_row(l, q.row(r), limit, mask, sk, sv, anc, attn.row(r));
        }
        Matrix o = matmul_bt(attn, lw.wo, &counter_, FlopCategory::attn_proj);
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += o.data[i];

        if (!append) {
            long long ret = 0;
            if (mask) {
                for (auto& hb : mask->head_blocks)
                    for (int blk : hb) ret += cache_.block_occupancy(blk);
            } else {
                ret = (long long)cfg.num_kv_heads * cache_.seq_len();
            }
            if (retained_out) (*retained_out)[l] = ret;
            retained_sum_ += ret;
            total_keys_sum_ += (long long)cfg.num_kv_heads * cache_.seq_len();
        }

        Matrix xn2(T, d);
        for (int r = 0; r < T; ++r) {
            auto nr = rms_norm({x.row(r), std::size_t(d)}, lw.ffn_norm);
            std::memcpy(xn2.row(r), nr.data(), sizeof(float) * std::size_t(d));
        }
        if (cfg.kind(l) == LayerKind::dense) {
            for (int r = 0; r < T; ++r) {
                FfnCallRecord rec;
                auto y = sparse_ffn_forward({xn2.row(r), std::size_t(d)}, lw.ffn, tau,
                                            &counter_, FlopCategory::ffn, &rec);
                float* xr = x.row(r);
                for (int j = 0; j < d; ++j) xr[j] += y[j];
                if (!append) {
                    ++ffn_calls_n_;
                    ffn_ratio_sum_ += double(rec.pruned) / double(rec.channels);
                    if (opts_.tracing) trace_.ffn_calls.push_back(rec);
                }
            }
        } else {
            for (int r = 0; r < T; ++r) {
                RoutedExperts routed = route_topk({xn2.row(r), std::size_t(d)}, l);
                if (opts_.collect_router)
                    trace_.router_weights[l].push_back(routed.weights);
                ExpertSelection sel;
                sel.routed = routed;
                bool renorm = false;
                if (sparse && plan_.moe && plan_.moe->budget_m > 0) {
                    auto it = plan_.moe->map.layer_beta.find(l);
                    if (it == plan_.moe->map.layer_beta.end())
                        throw ConfigError("Session: no skip thresholds for layer " +
                                          std::to_string(l));
                    sel = decide_skip(routed, it->second, plan_.moe->budget_m,
                                      plan_.moe->rules);
                    renorm = plan_.moe->renormalize;
                }
                std::vector<FfnCallRecord> recs;
                auto y = sparse_moe_forward({xn2.row(r), std::size_t(d)}, sel,
                                            lw.experts, tau, renorm, &counter_, &recs);
                float* xr = x.row(r);
                for (int j = 0; j < d; ++j) xr[j] += y[j];
                if (!append) {
                    ++moe_calls_n_;
                    moe_skip_sum_ += sel.i_star;
                    for (const auto& rec : recs) {
                        ++expert_calls_n_;
                        expert_ratio_sum_ += double(rec.pruned) / double(rec.channels);
                    }
                    if (opts_.tracing) {
                        trace_.moe_calls.emplace_back(sel.i_star, cfg.active_experts);
                        trace_.expert_ffn_calls.insert(trace_.expert_ffn_calls.end(),
                                                       recs.begin(), recs.end());
                    }
                }
            }
        }
    }
    if (masks_out) *masks_out = std::move(masks);
    return x;
}

std::vector<float> Session::prefill(std::span<const int> tokens) {
    if (cache_.seq_len() != 0 || pending_token_ || verify_outstanding_)
        throw LogicError("Session: prefill requires a fresh session");
    if (tokens.empty()) throw InputError("Session: empty prompt");
    BatchLayout b;
    b.tokens.assign(tokens.begin(), tokens.end());
    b.positions.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) b.positions.push_back(cache_.push());
    Matrix x = run_layers(b, /*append=*/true, /*sparse=*/false, nullptr, nullptr,
                          nullptr);
    entry_logits_ = head_logits(x.row(x.rows - 1));
    trace_.prefill_tokens = (long long)tokens.size();
    return entry_logits_;
}

std::vector<float> Session::advance(int token) {
    if (verify_outstanding_) throw LogicError("Session: advance before commit");
    if (pending_token_) throw LogicError("Session: advance with a pending token");
    if (cache_.seq_len() == 0) throw LogicError("Session: advance before prefill");
    BatchLayout b;
    b.tokens = {token};
    b.positions = {cache_.push()};
    Matrix x = run_layers(b, true, false, nullptr, nullptr, nullptr);
    entry_logits_ = head_logits(x.row(0));
    trace_.advance_keys.push_back(cache_.seq_len());
    return entry_logits_;
}

VerifyOutput Session::verify_forward(const DraftTree& tree) {
    const ModelConfig& cfg = weights_->config;
    if (verify_outstanding_) throw LogicError("Session: verify_forward before commit");
    if (cache_.seq_len() == 0) throw LogicError("Session: verify_forward before prefill");
    tree.validate(cfg.vocab);

    const int lseq = cache_.seq_len();
    const bool had_pending = pending_token_.has_value();
    const int off = had_pending ? 1 : 0;
    const int n = int(tree.nodes.size());

    BatchLayout b;
    b.ancestors.resize(std::size_t(off + n));
    if (had_pending) {
        b.tokens.push_back(*pending_token_);
        b.positions.push_back(lseq);
        b.ancestors[0] = {0};
    }
    for (int i = 0; i < n; ++i) {
        b.tokens.push_back(tree.nodes[i].token);
        b.positions.push_back(lseq + off + tree.depth_of(i));
        std::vector<int> anc;
        for (int j = i; j != -1; j = tree.nodes[j].parent) anc.push_back(off + j);
        if (had_pending) anc.push_back(0);
        std::reverse(anc.begin(), anc.end());
        b.ancestors[std::size_t(off + i)] = std::move(anc);
    }

    StepTrace st;
    st.lseq_start = lseq;
    st.rows = off + n;
    st.had_pending = had_pending;
    st.row_positions = b.positions;
    for (const auto& a : b.ancestors) st.row_ancestors.push_back(int(a.size()));
    const std::uint64_t score_before = counter_.get(FlopCategory::attn_score);

    std::vector<std::optional<BlockMask>> masks;
    std::vector<long long> retained(std::size_t(cfg.num_layers), 0);
    std::vector<std::vector<BlockMask>> row_masks;
    Matrix x = run_layers(b, /*append=*/false, /*sparse=*/true, &masks, &retained,
                          opts_.row_mask_diagnostics ? &row_masks : nullptr);

    VerifyOutput out;
    out.node_logits = Matrix(n, cfg.vocab);
    for (int i = 0; i < n; ++i) {
        auto lg = head_logits(x.row(off + i));
        std::memcpy(out.node_logits.row(i), lg.data(),
                    sizeof(float) * std::size_t(cfg.vocab));
    }
    if (had_pending) {
        out.attach_logits = head_logits(x.row(0));
        const int pos = cache_.push();
        const int hd = cfg.head_dim;
        for (int l = 0; l < cfg.num_layers; ++l)
            for (int h = 0; h < cfg.num_kv_heads; ++h)
                cache_.write(l, h, pos,
                             {staged_k_[l].row(0) + std::size_t(h) * hd, std::size_t(hd)},
                             {staged_v_[l].row(0) + std::size_t(h) * hd, std::size_t(hd)});
        pending_token_.reset();
    } else {
        out.attach_logits = entry_logits_;
    }

    st.attn_score_delta = counter_.get(FlopCategory::attn_score) - score_before;
    st.masks = std::move(masks);
    st.retained_keys = std::move(retained);
    st.row_masks = std::move(row_masks);
    if (opts_.tracing) trace_.steps.push_back(std::move(st));

    verify_outstanding_ = true;
    staged_rows_ = off + n;
    staged_had_pending_ = had_pending;
    return out;
}

void Session::commit(const DraftTree& tree, std::span<const int> accepted_path,
                     int bonus_token) {
    const ModelConfig& cfg = weights_->config;
    if (!verify_outstanding_) throw LogicError("Session: commit without verification");
    const int off = staged_had_pending_ ? 1 : 0;
    if (int(tree.nodes.size()) + off != staged_rows_)
        throw InputError("Session: commit tree does not match the verified batch");
    if (bonus_token < 0 || bonus_token >= cfg.vocab)
        throw InputError("Session: bonus token out of vocab");

    const int hd = cfg.head_dim;
    int prev = -1;
    for (int idx : accepted_path) {
        if (idx < 0 || idx >= int(tree.nodes.size()))
            throw InputError("Session: accepted node index out of range");
        if (tree.nodes[idx].parent != prev)
            throw InputError("Session: accepted path is not a root chain");
        const int pos = cache_.push();
        const int row = off + idx;
        for (int l = 0; l < cfg.num_layers; ++l)
            for (int h = 0; h < cfg.num_kv_heads; ++h)
                cache_.write(l, h, pos,
                             {staged_k_[l].row(row) + std::size_t(h) * hd,
                              std::size_t(hd)},
                             {staged_v_[l].row(row) + std::size_t(h) * hd,
                              std::size_t(hd)});
        prev = idx;
    }
    pending_token_ = bonus_token;
    verify_outstanding_ = false;
    staged_rows_ = 0;
    staged_had_pending_ = false;
    for (auto& m : staged_k_) m = Matrix();
    for (auto& m : staged_v_) m = Matrix();
}

void Session::truncate_to(int new_len) {
    if (verify_outstanding_) throw LogicError("Session: truncate with verification outstanding");
    if (pending_token_) throw LogicError("Session: truncate with a pending token");
    cache_.truncate(new_len);
}

MeasuredSparsity Session::measured_sparsity() const {
    MeasuredSparsity m;
    if (total_keys_sum_ > 0)
        m.s_a = 1.0 - double(retained_sum_) / double(total_keys_sum_);
    if (ffn_calls_n_ > 0) m.s_f = ffn_ratio_sum_ / double(ffn_calls_n_);
    if (moe_calls_n_ > 0)
        m.s_e = double(moe_skip_sum_) /
                (double(moe_calls_n_) * weights_->config.active_experts);
    if (expert_calls_n_ > 0) m.expert_ffn = expert_ratio_sum_ / double(expert_calls_n_);
    return m;
}

} // namespace sv
