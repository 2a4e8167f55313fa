#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sv/draft_tree.hpp"
#include "sv/flops.hpp"
#include "sv/model.hpp"
#include "sv/rng.hpp"

namespace sv {

/* softmax(logits / temperature); temperature <= 0 collapses to the argmax
 * one-hot (ties toward the lower token id). */
std::vector<float> probs_from_logits(std::span<const float> logits, float temperature);

/* Accept iff u < min(1, p_target / q_draft). A drafted token always has
 * q > 0, so q = 0 is a logic error; u must lie in [0,1). */
bool accept_token(double p_target, double q_draft, double u);

/* norm(max(0, P - Q)) element-wise; if the residual mass is below 1e-12
 * (P = Q up to dust) falls back to P. */
std::vector<float> residual_distribution(std::span<const float> p,
                                         std::span<const float> q);

struct StepOutcome {
    std::vector<int> accepted_path;  // node indices, root-to-leaf order
    std::vector<int> emitted_tokens; // accepted tokens + one final token
    /* min(1, p/q) for every candidate tried, in trial order */
    std::vector<double> alphas;
    bool full_path = false; // final token is a bonus draw, not a residual draw
};

struct AcceptanceStats {
    long long steps = 0;
    long long emitted = 0;
    double alpha() const { return steps > 0 ? double(emitted) / double(steps) : 0.0; }
};

/* Walks from the root: children are tried in tree order with accept_token;
 * first acceptance descends, each rejection folds that child's draft
 * distribution into the residual (P <- norm(max(0, P - Q_child))) before the
 * next sibling. All children rejected -> one residual draw; full path
 * accepted -> one bonus draw from the target at the leaf. target_node_probs
 * row i and attach_probs are post-softmax target rows from verify_forward.
 * Consumes one uniform per trial, then exactly one final draw. */
StepOutcome verify_step(const DraftTree& tree, const Matrix& target_node_probs,
                        std::span<const float> attach_probs, Rng& rng);

/* Produces draft distributions slot by slot. start() binds the prompt;
 * push/pop extend and rewind the generated suffix (pop(n) drops the last n
 * pushed tokens). dist() is idempotent at a given context. */
class DraftSource {
public:
    virtual ~DraftSource() = default;
    virtual void start(std::span<const int> prompt) = 0;
    virtual std::vector<float> dist() = 0;
    virtual void push(int token) = 0;
    virtual void pop(int n) = 0;
    virtual const FlopCounter* counter() const { return nullptr; }
};

/* Draft backed by a dense model session (pass the target weights to
 * self-draft). Keeps a logits stack so pop() costs no forward pass. */
class ModelDraft : public DraftSource {
public:
    ModelDraft(std::shared_ptr<const Weights> weights, float temperature);
    void start(std::span<const int> prompt) override;
    std::vector<float> dist() override;
    void push(int token) override;
    void pop(int n) override;
    const FlopCounter* counter() const override { return &session_.counter(); }

private:
    Session session_;
    float temperature_ = 1.0f;
    std::vector<std::vector<float>> logits_stack_; // one entry per context slot
};

/* Model-free stress draft: (1-delta) * onehot(slot-dependent token) +
 * delta * uniform. The peak token almost never matches the target's
 * preference, so rejection and residual paths get exercised hard. */
class AdversarialDraft : public DraftSource {
public:
    explicit AdversarialDraft(int vocab, float delta = 0.01f);
    void start(std::span<const int> prompt) override { slot_ = int(prompt.size()); }
    std::vector<float> dist() override;
    void push(int) override { ++slot_; }
    void pop(int n) override { slot_ -= n; }

private:
    int peak(int slot) const { return int((17LL * slot + 3) % vocab_); }
    int vocab_;
    float delta_;
    int slot_ = 0;
};

/* Linear chain of K nodes sampled autoregressively from the draft; q and the
 * full distribution recorded per node. Leaves the draft context unchanged. */
DraftTree propose_chain(DraftSource& draft, int draft_len, Rng& rng);

/* Template tree: at depth i each node gets the draft's top branching[i]
 * tokens (probability descending, id ascending). Node count is the sum over
 * depths of the running product of branching factors. Deterministic; leaves
 * the draft context unchanged. */
DraftTree propose_tree(DraftSource& draft, std::span<const int> branching,
                       int max_nodes = 256);

struct DecodeConfig {
    int max_tokens = 32;
    int draft_len = 3;               // chain K
    std::vector<int> tree_template;  // non-empty switches to tree proposal
    float temperature = 1.0f;
    int max_nodes = 256;
};

struct DecodeResult {
    std::vector<int> tokens; // truncated to max_tokens
    AcceptanceStats stats;   // counts the raw emitted stream, overshoot included
    std::vector<StepOutcome> outcomes;
    FlopsBreakdown flops; // target-session reconciliation
    MeasuredSparsity sparsity;
    FlopCounter target_counter;
    FlopCounter draft_counter; // zero for model-free drafts
};

/* Full loop: propose -> verify_forward -> verify_step -> commit until at
 * least max_tokens are emitted. The target session must be fresh and have
 * tracing enabled; one Rng drives draft sampling, acceptance draws, and the
 * final draw of every step, in that order. */
DecodeResult decode(Session& target, DraftSource& draft, std::span<const int> prompt,
                    const DecodeConfig& cfg, Rng& rng);

} // namespace sv
