#include "sv/specdec.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "sv/error.hpp"
#include "sv/kernels.hpp"

namespace sv {

std::vector<float> probs_from_logits(std::span<const float> logits, float temperature) {
    if (logits.empty()) throw InputError("probs_from_logits: empty logits");
    if (temperature <= 0.0f) {
        int best = 0;
        for (int i = 1; i < int(logits.size()); ++i)
            if (logits[i] > logits[best]) best = i;
        std::vector<float> out(logits.size(), 0.0f);
        out[best] = 1.0f;
        return out;
    }
    if (temperature == 1.0f) return softmax(logits);
    std::vector<float> scaled(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
    return softmax(scaled);
}

bool accept_token(double p_target, double q_draft, double u) {
    if (!(q_draft > 0.0))
        throw LogicError("accept_token: drafted token must have q > 0");
    if (!(u >= 0.0 && u < 1.0)) throw InputError("accept_token: u outside [0,1)");
    return u < std::min(1.0, p_target / q_draft);
}

std::vector<float> residual_distribution(std::span<const float> p,
                                         std::span<const float> q) {
    if (p.size() != q.size())
        throw InputError("residual_distribution: length mismatch");
    if (p.empty()) throw InputError("residual_distribution: empty distribution");
    std::vector<double> r(p.size());
    double mass = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double v = double(p[i]) - double(q[i]);
        r[i] = v > 0.0 ? v : 0.0;
        mass += r[i];
    }
    if (mass < 1e-12) return std::vector<float>(p.begin(), p.end());
    std::vector<float> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = float(r[i] / mass);
    return out;
}

StepOutcome verify_step(const DraftTree& tree, const Matrix& target_node_probs,
                        std::span<const float> attach_probs, Rng& rng) {
    if (target_node_probs.rows != int(tree.nodes.size()))
        throw InputError("verify_step: target rows != node count");
    if (int(attach_probs.size()) != target_node_probs.cols)
        throw InputError("verify_step: attach length != vocab");

    StepOutcome out;
    std::vector<float> cur(attach_probs.begin(), attach_probs.end());
    int parent = -1;
    while (true) {
        const std::vector<int> kids = tree.children_of(parent);
        bool descended = false;
        for (int c : kids) {
            const double q = double(tree.nodes[c].q);
            const double p = double(cur[tree.nodes[c].token]);
            out.alphas.push_back(std::min(1.0, p / q));
            if (accept_token(p, q, rng.uniform())) {
                out.accepted_path.push_back(c);
                out.emitted_tokens.push_back(tree.nodes[c].token);
                cur.assign(target_node_probs.row(c),
                           target_node_probs.row(c) + target_node_probs.cols);
                parent = c;
                descended = true;
                break;
            }
            cur = residual_distribution(cur, tree.node_dist[c]);
        }
        if (descended) continue;
        // leaf reached -> bonus draw from the target; otherwise every child
        // was rejected and cur is the accumulated residual
        out.full_path = kids.empty();
        out.emitted_tokens.push_back(rng.sample(cur));
        return out;
    }
}

ModelDraft::ModelDraft(std::shared_ptr<const Weights> weights, float temperature)
    : session_(std::move(weights), SparsityPlan{}), temperature_(temperature) {}

void ModelDraft::start(std::span<const int> prompt) {
    logits_stack_.clear();
    logits_stack_.push_back(session_.prefill(prompt));
}

std::vector<float> ModelDraft::dist() {
    if (logits_stack_.empty()) throw LogicError("ModelDraft: dist before start");
    return probs_from_logits(logits_stack_.back(), temperature_);
}

void ModelDraft::push(int token) {
    if (logits_stack_.empty()) throw LogicError("ModelDraft: push before start");
    logits_stack_.push_back(session_.advance(token));
}

void ModelDraft::pop(int n) {
    if (n < 0 || n >= int(logits_stack_.size()))
        throw LogicError("ModelDraft: pop past the prompt");
    if (n == 0) return;
    session_.truncate_to(session_.committed_len() - n);
    logits_stack_.resize(logits_stack_.size() - std::size_t(n));
}

AdversarialDraft::AdversarialDraft(int vocab, float delta)
    : vocab_(vocab), delta_(delta) {
    if (vocab < 1) throw ConfigError("AdversarialDraft: vocab must be >= 1");
    if (!(delta >= 0.0f && delta < 1.0f))
        throw ConfigError("AdversarialDraft: delta must be in [0,1)");
}

std::vector<float> AdversarialDraft::dist() {
    std::vector<float> d(std::size_t(vocab_), delta_ / float(vocab_));
    d[peak(slot_)] += 1.0f - delta_;
    return d;
}

DraftTree propose_chain(DraftSource& draft, int draft_len, Rng& rng) {
    if (draft_len < 1) throw ConfigError("propose_chain: draft_len must be >= 1");
    DraftTree t;
    int pushed = 0;
    for (int k = 0; k < draft_len; ++k) {
        std::vector<float> d = draft.dist();
        const int tok = rng.sample(d);
        t.nodes.push_back({k - 1, tok, d[tok]});
        t.node_dist.push_back(std::move(d));
        if (k + 1 < draft_len) {
            draft.push(tok);
            ++pushed;
        }
    }
    draft.pop(pushed);
    return t;
}

static void grow_tree(DraftTree& t, DraftSource& draft,
                      std::span<const int> branching, int depth, int parent) {
    const std::vector<float> dist = draft.dist();
    const int b = branching[depth];
    if (b > int(dist.size()))
        throw InputError("propose_tree: branching factor exceeds vocab");
    std::vector<int> ids(dist.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::partial_sort(ids.begin(), ids.begin() + b, ids.end(), [&](int a, int c) {
        if (dist[a] != dist[c]) return dist[a] > dist[c];
        return a < c;
    });
    for (int i = 0; i < b; ++i) {
        const int tok = ids[i];
        if (!(dist[tok] > 0.0f))
            throw InputError("propose_tree: branching factor exceeds draft support");
        const int me = int(t.nodes.size());
        t.nodes.push_back({parent, tok, dist[tok]});
        t.node_dist.push_back(dist);
        if (depth + 1 < int(branching.size())) {
            draft.push(tok);
            grow_tree(t, draft, branching, depth + 1, me);
            draft.pop(1);
        }
    }
}

DraftTree propose_tree(DraftSource& draft, std::span<const int> branching,
                       int max_nodes) {
    if (branching.empty()) throw ConfigError("propose_tree: empty template");
    long long nodes = 0, width = 1;
    for (int b : branching) {
        if (b < 1) throw ConfigError("propose_tree: branching factors must be >= 1");
        width *= b;
        nodes += width;
        if (nodes > max_nodes)
            throw InputError("propose_tree: template exceeds the node budget");
    }
    DraftTree t;
    grow_tree(t, draft, branching, 0, -1);
    return t;
}

DecodeResult decode(Session& target, DraftSource& draft, std::span<const int> prompt,
                    const DecodeConfig& cfg, Rng& rng) {
    if (cfg.max_tokens < 1) throw ConfigError("decode: max_tokens must be >= 1");
    if (!target.options().tracing)
        throw ConfigError("decode: target session needs tracing for the FLOP report");
    target.prefill(prompt);
    draft.start(prompt);

    const int vocab = target.config().vocab;
    DecodeResult res;
    while (res.stats.emitted < cfg.max_tokens) {
        DraftTree tree = cfg.tree_template.empty()
                             ? propose_chain(draft, cfg.draft_len, rng)
                             : propose_tree(draft, cfg.tree_template, cfg.max_nodes);
        VerifyOutput vo = target.verify_forward(tree);
        Matrix probs(vo.node_logits.rows, vo.node_logits.cols);
        for (int i = 0; i < vo.node_logits.rows; ++i) {
            const auto row = probs_from_logits(
                {vo.node_logits.row(i), std::size_t(vocab)}, cfg.temperature);
            std::memcpy(probs.row(i), row.data(), sizeof(float) * row.size());
        }
        const auto attach = probs_from_logits(vo.attach_logits, cfg.temperature);
        StepOutcome oc = verify_step(tree, probs, attach, rng);
        target.commit(tree, oc.accepted_path, oc.emitted_tokens.back());
        for (int tok : oc.emitted_tokens) draft.push(tok);

        res.stats.steps += 1;
        res.stats.emitted += (long long)oc.emitted_tokens.size();
        res.tokens.insert(res.tokens.end(), oc.emitted_tokens.begin(),
                          oc.emitted_tokens.end());
        res.outcomes.push_back(std::move(oc));
    }
    if (int(res.tokens.size()) > cfg.max_tokens) res.tokens.resize(cfg.max_tokens);
    res.sparsity = target.measured_sparsity();
    res.target_counter = target.counter();
    if (draft.counter()) res.draft_counter = *draft.counter();
    res.flops = reconcile(target.trace(), target.counter(), target.config());
    return res;
}

} // namespace sv
