#include "sv/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>

#include "sv/error.hpp"
#include "sv/kernels.hpp"
#include "sv/retrieval_reuse.hpp"
#include "sv/sparse_attention.hpp"
#include "sv/sparse_moe.hpp"

namespace sv {

using nlohmann::json;

namespace {

void check_keys(const json& j, const char* what,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ConfigError(std::string(what) + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) { known = true; break; }
        if (!known)
            throw ConfigError(std::string(what) + ": unknown field '" + it.key() + "'");
    }
}

const char* mode_name(DraftMode m) {
    switch (m) {
        case DraftMode::model: return "model";
        case DraftMode::self_draft: return "self";
        case DraftMode::adversarial: return "adversarial";
    }
    throw LogicError("mode_name: bad draft mode");
}

DraftMode mode_from_name(const std::string& s) {
    if (s == "model") return DraftMode::model;
    if (s == "self") return DraftMode::self_draft;
    if (s == "adversarial") return DraftMode::adversarial;
    throw ConfigError("draft_mode must be model|self|adversarial, got '" + s + "'");
}

json model_source_to_json(const ModelSource& m) {
    return json{{"config", config_to_json(m.config)},
                {"weights", m.weights_file},
                {"init_seed", m.init_seed}};
}

ModelSource model_source_from_json(const json& j, const char* what) {
    check_keys(j, what, {"config", "weights", "init_seed"});
    ModelSource m;
    if (j.contains("config")) m.config = config_from_json(j["config"]);
    m.weights_file = j.value("weights", m.weights_file);
    m.init_seed = j.value("init_seed", m.init_seed);
    return m;
}

/* %.10g keeps CSV numbers short and byte-stable. */
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::shared_ptr<const Weights> draft_weights_for(
    const ExperimentConfig& cfg, const std::shared_ptr<const Weights>& target_w) {
    switch (cfg.draft_mode) {
        case DraftMode::model: return cfg.draft.load();
        case DraftMode::self_draft: return target_w;
        case DraftMode::adversarial: return nullptr;
    }
    throw LogicError("draft_weights_for: bad draft mode");
}

DraftTree propose(const DecodeConfig& dc, DraftSource& draft, Rng& rng) {
    return dc.tree_template.empty()
               ? propose_chain(draft, dc.draft_len, rng)
               : propose_tree(draft, dc.tree_template, dc.max_nodes);
}

} // namespace

std::shared_ptr<const Weights> ModelSource::load() const {
    if (!weights_file.empty()) return load_weights(weights_file);
    return init_weights(config, init_seed);
}

SparsityPlan PlanSpec::resolve(const ModelConfig& cfg) const {
    SparsityPlan plan;
    if (rho) {
        AttnPlan ap;
        ap.cfg.base_length = base_length;
        ap.cfg.rho = *rho;
        ap.cfg.sink_blocks = sink_blocks;
        ap.cfg.local_blocks = local_blocks;
        ap.cfg.block_size = cfg.block_size;
        ap.cfg.max_aggregation = max_aggregation;
        if (!anchors_file.empty())
            ap.anchors = anchors_from_json(load_json(anchors_file));
        plan.attention = std::move(ap);
    } else if (!anchors_file.empty()) {
        throw ConfigError("plan: an anchors file needs attention sparsity (set rho)");
    }
    if (tau) plan.ffn_tau = *tau;
    if (!thresholds_file.empty()) {
        MoEPlan mp;
        mp.map = thresholds_from_json(load_json(thresholds_file));
        mp.budget_m = budget_m;
        mp.renormalize = renormalize;
        plan.moe = std::move(mp);
    } else if (budget_m != 0) {
        throw ConfigError("plan: a skip budget needs a thresholds file");
    }
    plan.validate(cfg.num_layers);
    return plan;
}

json PlanSpec::to_json() const {
    return json{{"rho", rho ? json(*rho) : json(nullptr)},
                {"L0", base_length},
                {"sink_blocks", sink_blocks},
                {"local_blocks", local_blocks},
                {"max_aggregation", max_aggregation},
                {"anchors", anchors_file},
                {"tau", tau ? json(*tau) : json(nullptr)},
                {"thresholds", thresholds_file},
                {"m", budget_m},
                {"renormalize", renormalize}};
}

PlanSpec PlanSpec::from_json(const json& j) {
    check_keys(j, "plan",
               {"rho", "L0", "sink_blocks", "local_blocks", "max_aggregation",
                "anchors", "tau", "thresholds", "m", "renormalize"});
    PlanSpec p;
    if (j.contains("rho") && !j["rho"].is_null()) p.rho = j["rho"].get<double>();
    p.base_length = j.value("L0", p.base_length);
    p.sink_blocks = j.value("sink_blocks", p.sink_blocks);
    p.local_blocks = j.value("local_blocks", p.local_blocks);
    p.max_aggregation = j.value("max_aggregation", p.max_aggregation);
    p.anchors_file = j.value("anchors", p.anchors_file);
    if (j.contains("tau") && !j["tau"].is_null()) p.tau = j["tau"].get<float>();
    p.thresholds_file = j.value("thresholds", p.thresholds_file);
    p.budget_m = j.value("m", p.budget_m);
    p.renormalize = j.value("renormalize", p.renormalize);
    return p;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    check_keys(j, "experiment",
               {"target", "draft", "draft_mode", "adversarial_delta", "draft_len",
                "tree", "temperature", "seed", "max_tokens", "prompts", "prompt",
                "plan", "k_anchor", "lossless_threshold", "anchors_out",
                "thresholds_out", "variants"});
    ExperimentConfig c;
    if (j.contains("target")) c.target = model_source_from_json(j["target"], "target");
    if (j.contains("draft")) c.draft = model_source_from_json(j["draft"], "draft");
    if (j.contains("draft_mode")) c.draft_mode = mode_from_name(j["draft_mode"].get<std::string>());
    c.adversarial_delta = j.value("adversarial_delta", c.adversarial_delta);
    c.draft_len = j.value("draft_len", c.draft_len);
    if (j.contains("tree")) c.tree_template = j["tree"].get<std::vector<int>>();
    c.temperature = j.value("temperature", c.temperature);
    c.seed = j.value("seed", c.seed);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.prompts_file = j.value("prompts", c.prompts_file);
    if (j.contains("prompt")) c.inline_prompt = j["prompt"].get<std::vector<int>>();
    if (j.contains("plan")) c.plan = PlanSpec::from_json(j["plan"]);
    c.k_anchor = j.value("k_anchor", c.k_anchor);
    c.lossless_threshold = j.value("lossless_threshold", c.lossless_threshold);
    c.anchors_out = j.value("anchors_out", c.anchors_out);
    c.thresholds_out = j.value("thresholds_out", c.thresholds_out);
    if (j.contains("variants")) {
        for (const json& v : j["variants"]) {
            check_keys(v, "variant", {"name", "plan"});
            BenchVariant bv;
            bv.name = v.at("name").get<std::string>();
            if (v.contains("plan")) bv.plan = PlanSpec::from_json(v["plan"]);
            c.variants.push_back(std::move(bv));
        }
    }
    return c;
}

json ExperimentConfig::to_json() const {
    json variants_j = json::array();
    for (const BenchVariant& v : variants)
        variants_j.push_back(json{{"name", v.name}, {"plan", v.plan.to_json()}});
    return json{{"target", model_source_to_json(target)},
                {"draft", model_source_to_json(draft)},
                {"draft_mode", mode_name(draft_mode)},
                {"adversarial_delta", adversarial_delta},
                {"draft_len", draft_len},
                {"tree", tree_template},
                {"temperature", temperature},
                {"seed", seed},
                {"max_tokens", max_tokens},
                {"prompts", prompts_file},
                {"prompt", inline_prompt},
                {"plan", plan.to_json()},
                {"k_anchor", k_anchor},
                {"lossless_threshold", lossless_threshold},
                {"anchors_out", anchors_out},
                {"thresholds_out", thresholds_out},
                {"variants", variants_j}};
}

std::vector<std::vector<int>> ExperimentConfig::prompts() const {
    if (!prompts_file.empty()) return load_prompts(prompts_file);
    if (!inline_prompt.empty()) return {inline_prompt};
    throw ConfigError("no prompts: set a prompts file or an inline prompt");
}

std::uint64_t ExperimentConfig::config_hash() const {
    return fnv1a_hash(to_json().dump());
}

DecodeConfig ExperimentConfig::decode_config() const {
    DecodeConfig dc;
    dc.max_tokens = max_tokens;
    dc.draft_len = draft_len;
    dc.tree_template = tree_template;
    dc.temperature = temperature;
    return dc;
}

std::unique_ptr<DraftSource> ExperimentConfig::make_draft(
    std::shared_ptr<const Weights> target_w,
    std::shared_ptr<const Weights> draft_w) const {
    switch (draft_mode) {
        case DraftMode::model:
            if (!draft_w) throw LogicError("make_draft: draft weights not loaded");
            return std::make_unique<ModelDraft>(std::move(draft_w), temperature);
        case DraftMode::self_draft:
            if (!target_w) throw LogicError("make_draft: target weights not loaded");
            return std::make_unique<ModelDraft>(std::move(target_w), temperature);
        case DraftMode::adversarial:
            if (!target_w) throw LogicError("make_draft: target weights not loaded");
            return std::make_unique<AdversarialDraft>(target_w->config.vocab,
                                                      adversarial_delta);
    }
    throw LogicError("make_draft: bad draft mode");
}

int worker_count(int jobs) {
    if (jobs <= 1) return 1;
    int cap = 0;
    if (const char* env = std::getenv("SPECVERIFY_THREADS")) cap = std::atoi(env);
    if (cap < 1) cap = int(std::thread::hardware_concurrency());
    if (cap < 1) cap = 1;
    return std::min(jobs, cap);
}

void run_indexed(int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 0) return;
    const int workers = worker_count(jobs);
    if (workers <= 1) {
        for (int i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(jobs);
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            SerialSection serial; // workers stay off the OpenMP kernel paths
            for (int i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

json decode_record(const DecodeResult& res, std::uint64_t seed,
                   std::uint64_t config_hash, int prompt_index) {
    json comp = json::object();
    for (const ComponentCheck& c : res.flops.components) comp[c.name] = c.instrumented;
    char hex[19];
    std::snprintf(hex, sizeof hex, "0x%016" PRIx64, config_hash);
    return json{{"prompt_index", prompt_index},
                {"seed", seed},
                {"config_hash", hex},
                {"alpha", res.stats.alpha()},
                {"steps", res.stats.steps},
                {"emitted", res.stats.emitted},
                {"tokens", res.tokens},
                {"s_a", res.sparsity.s_a},
                {"s_f", res.sparsity.s_f},
                {"s_e", res.sparsity.s_e},
                {"flops", comp},
                {"flops_total", res.flops.instrumented_total},
                {"draft_flops", res.draft_counter.total()}};
}

void cmd_generate(const ExperimentConfig& cfg, std::ostream& out) {
    const auto prompts = cfg.prompts();
    auto target_w = cfg.target.load();
    auto draft_w = draft_weights_for(cfg, target_w);
    const SparsityPlan plan = cfg.plan.resolve(target_w->config);
    const std::uint64_t hash = cfg.config_hash();
    std::vector<std::string> lines(prompts.size());
    run_indexed(int(prompts.size()), [&](int i) {
        const std::uint64_t seed = cfg.seed ^ std::uint64_t(i);
        SessionOptions opts;
        opts.tracing = true;
        Session target(target_w, plan, opts);
        auto draft = cfg.make_draft(target_w, draft_w);
        Rng rng(seed);
        DecodeResult res = decode(target, *draft, prompts[i], cfg.decode_config(), rng);
        lines[i] = decode_record(res, seed, hash, i).dump();
    });
    for (const std::string& l : lines) out << l << '\n';
}

void cmd_calibrate(const ExperimentConfig& cfg, const std::string& mode,
                   std::ostream& out, std::ostream& warn) {
    const bool want_anchors = mode == "anchors" || mode == "both";
    const bool want_moe = mode == "moe" || mode == "both";
    if (!want_anchors && !want_moe)
        throw ConfigError("calibrate: mode must be anchors|moe|both, got '" + mode + "'");
    const auto seqs = cfg.prompts();
    auto w = cfg.target.load();

    std::size_t len_min = seqs.front().size(), len_max = 0;
    double len_sum = 0.0;
    for (const auto& s : seqs) {
        len_min = std::min(len_min, s.size());
        len_max = std::max(len_max, s.size());
        len_sum += double(s.size());
    }
    out << "calibration sequences: n=" << seqs.size() << " len_min=" << len_min
        << " len_max=" << len_max << " len_mean=" << fmt(len_sum / double(seqs.size()))
        << "\n";

    if (want_anchors) {
        if (!cfg.plan.rho)
            throw ConfigError("calibrate: anchors mode needs attention settings (set rho)");
        AttnSparsityConfig attn;
        attn.base_length = cfg.plan.base_length;
        attn.rho = *cfg.plan.rho;
        attn.sink_blocks = cfg.plan.sink_blocks;
        attn.local_blocks = cfg.plan.local_blocks;
        attn.block_size = w->config.block_size;
        attn.max_aggregation = cfg.plan.max_aggregation;
        const int k = cfg.k_anchor > 0 ? cfg.k_anchor : w->config.num_layers;
        const ReuseCalibReport rep = calibrate_anchors(*w, seqs, attn, k, warn);
        save_json(cfg.anchors_out, anchors_to_json(rep.anchors));
        out << "anchors (1-based):";
        for (int a : rep.anchors.anchors) out << ' ' << a;
        out << "\nsamples: used=" << rep.samples_used
            << " skipped=" << rep.samples_skipped << "\n";
        for (std::size_t l = 0; l < rep.mean_adjacent_jaccard.size(); ++l)
            out << "layer " << (l + 1)
                << " mean_adjacent_jaccard=" << fmt(rep.mean_adjacent_jaccard[l]) << "\n";
        out << "wrote " << cfg.anchors_out << "\n";
    }

    if (want_moe) {
        if (!w->config.has_moe())
            throw ConfigError("calibrate: moe mode needs a model with moe layers");
        const int k = w->config.active_experts;
        if (k < 2)
            throw ConfigError("calibrate: at least two active experts required to skip any");
        std::vector<std::map<int, std::vector<std::vector<float>>>> parts(seqs.size());
        run_indexed(int(seqs.size()), [&](int i) {
            SessionOptions opts;
            opts.collect_router = true;
            Session s(w, SparsityPlan{}, opts);
            s.prefill(seqs[i]);
            parts[i] = s.trace().router_weights;
        });
        std::map<int, std::vector<std::vector<float>>> stream;
        for (const auto& part : parts)
            for (const auto& [layer, rows] : part) {
                auto& dst = stream[layer];
                dst.insert(dst.end(), rows.begin(), rows.end());
            }
        const ThresholdMap map = build_threshold_map(stream, k, k - 1);
        save_json(cfg.thresholds_out, thresholds_to_json(map));
        out << "thresholds: k=" << map.k << " calib_tokens=" << map.calib_tokens << "\n";
        for (const auto& [layer, beta] : map.layer_beta) {
            out << "layer " << layer << " beta:";
            for (double b : beta) out << ' ' << fmt(b);
            out << "\n";
        }
        out << "wrote " << cfg.thresholds_out << "\n";
    }
}

void cmd_overlap(const ExperimentConfig& cfg, int max_distance, std::ostream& out) {
    if (cfg.tree_template.empty())
        throw ConfigError("overlap: tree proposal required (set a tree template)");
    if (!cfg.plan.rho)
        throw ConfigError("overlap: attention sparsity must be active (set rho)");
    if (max_distance < 0)
        throw ConfigError("overlap: max distance must be >= 0");
    const auto prompts = cfg.prompts();
    auto target_w = cfg.target.load();
    auto draft_w = draft_weights_for(cfg, target_w);
    const SparsityPlan plan = cfg.plan.resolve(target_w->config);
    const int num_layers = target_w->config.num_layers;

    /* per layer: distance -> (overlap sum, pair count) */
    using Acc = std::vector<std::map<int, std::pair<double, long long>>>;
    std::vector<Acc> parts(prompts.size());
    run_indexed(int(prompts.size()), [&](int i) {
        Acc acc(num_layers);
        SessionOptions opts;
        opts.tracing = true;
        opts.row_mask_diagnostics = true;
        Session target(target_w, plan, opts);
        auto draft = cfg.make_draft(target_w, draft_w);
        Rng rng(cfg.seed ^ std::uint64_t(i));
        decode(target, *draft, prompts[i], cfg.decode_config(), rng);
        for (const StepTrace& st : target.trace().steps) {
            /* the pending row is last step's emission, not a draft token */
            const std::size_t off = st.had_pending ? 1 : 0;
            for (int l = 0; l < int(st.row_masks.size()); ++l) {
                const auto& rows = st.row_masks[l];
                if (rows.size() < off + 2) continue;
                for (std::size_t a = off; a < rows.size(); ++a)
                    for (std::size_t b = a + 1; b < rows.size(); ++b) {
                        const int dist =
                            std::abs(st.row_positions[a] - st.row_positions[b]);
                        if (dist > max_distance) continue;
                        auto& slot = acc[l][dist];
                        slot.first += overlap_ratio(rows[a], rows[b]);
                        slot.second += 1;
                    }
            }
        }
        parts[i] = std::move(acc);
    });

    Acc total(num_layers);
    for (const Acc& p : parts)
        for (int l = 0; l < int(p.size()); ++l)
            for (const auto& [dist, slot] : p[l]) {
                auto& t = total[l][dist];
                t.first += slot.first;
                t.second += slot.second;
            }
    out << "layer,distance,mean_overlap\n";
    for (int l = 0; l < num_layers; ++l)
        for (const auto& [dist, slot] : total[l])
            out << (l + 1) << ',' << dist << ','
                << fmt(slot.first / double(slot.second)) << '\n';
}

LosslessReport cmd_lossless(const ExperimentConfig& cfg, long long trials,
                            std::ostream& out) {
    if (trials < 1) throw ConfigError("lossless: trials must be >= 1");
    const auto prompts = cfg.prompts();
    const std::vector<int>& prompt = prompts.front();
    auto target_w = cfg.target.load();
    auto draft_w = draft_weights_for(cfg, target_w);
    const SparsityPlan plan = cfg.plan.resolve(target_w->config);
    if (!plan.all_off())
        throw ConfigError("lossless: sparsity must be off");
    const int vocab = target_w->config.vocab;
    const DecodeConfig dc = cfg.decode_config();

    /* prompt prefilled once; every trial copies this session */
    Session tpl(target_w, plan);
    const std::vector<float> exact = probs_from_logits(tpl.prefill(prompt), dc.temperature);

    const int workers =
        worker_count(trials > (1 << 20) ? (1 << 20) : int(trials));
    std::vector<std::vector<long long>> counts(
        std::size_t(workers), std::vector<long long>(std::size_t(vocab), 0));
    run_indexed(workers, [&](int w) {
        const long long lo = trials * w / workers;
        const long long hi = trials * (w + 1) / workers;
        if (lo >= hi) return;
        auto draft = cfg.make_draft(target_w, draft_w);
        draft->start(prompt); // proposals leave the context unchanged
        auto& mine = counts[std::size_t(w)];
        for (long long t = lo; t < hi; ++t) {
            Rng rng(cfg.seed ^ std::uint64_t(t));
            const DraftTree tree = propose(dc, *draft, rng);
            Session target = tpl;
            VerifyOutput vo = target.verify_forward(tree);
            Matrix probs(vo.node_logits.rows, vo.node_logits.cols);
            for (int r = 0; r < vo.node_logits.rows; ++r) {
                const auto row = probs_from_logits(
                    {vo.node_logits.row(r), std::size_t(vo.node_logits.cols)},
                    dc.temperature);
                std::copy(row.begin(), row.end(), probs.row(r));
            }
            const auto attach = probs_from_logits(vo.attach_logits, dc.temperature);
            const StepOutcome so = verify_step(tree, probs, attach, rng);
            ++mine[std::size_t(so.emitted_tokens.front())];
        }
    });

    std::vector<long long> hist(std::size_t(vocab), 0);
    for (const auto& c : counts)
        for (int v = 0; v < vocab; ++v) hist[std::size_t(v)] += c[std::size_t(v)];
    double tv = 0.0;
    for (int v = 0; v < vocab; ++v)
        tv += std::fabs(double(hist[std::size_t(v)]) / double(trials)
                        - double(exact[std::size_t(v)]));
    tv *= 0.5;

    LosslessReport rep;
    rep.trials = trials;
    rep.vocab = vocab;
    rep.tv = tv;
    rep.threshold = cfg.lossless_threshold;
    rep.pass = tv < cfg.lossless_threshold;
    out << "trials=" << rep.trials << " vocab=" << rep.vocab << " tv=" << fmt(rep.tv)
        << " threshold=" << fmt(rep.threshold) << ' ' << (rep.pass ? "pass" : "FAIL")
        << '\n';
    return rep;
}

void cmd_bench(const ExperimentConfig& cfg, std::ostream& out) {
    if (cfg.variants.size() < 2)
        throw ConfigError("bench: at least two variants required");
    for (const BenchVariant& v : cfg.variants)
        if (v.name.empty() || v.name.find_first_of(",\n") != std::string::npos)
            throw ConfigError("bench: variant names must be non-empty and comma-free");
    const auto prompts = cfg.prompts();
    const std::vector<int>& prompt = prompts.front();
    auto target_w = cfg.target.load();
    auto draft_w = draft_weights_for(cfg, target_w);
    std::vector<std::string> rows(cfg.variants.size());
    run_indexed(int(cfg.variants.size()), [&](int i) {
        const SparsityPlan plan = cfg.variants[std::size_t(i)].plan.resolve(target_w->config);
        SessionOptions opts;
        opts.tracing = true;
        Session target(target_w, plan, opts);
        auto draft = cfg.make_draft(target_w, draft_w);
        Rng rng(cfg.seed); // same seed and prompt for every variant
        const DecodeResult res = decode(target, *draft, prompt, cfg.decode_config(), rng);
        std::ostringstream os;
        os << cfg.variants[std::size_t(i)].name << ',' << fmt(res.stats.alpha()) << ','
           << res.stats.steps << ',' << res.stats.emitted;
        for (const ComponentCheck& c : res.flops.components) os << ',' << c.instrumented;
        os << ',' << res.flops.instrumented_total << ',' << res.draft_counter.total()
           << ',' << fmt(res.sparsity.s_a) << ',' << fmt(res.sparsity.s_f) << ','
           << fmt(res.sparsity.s_e) << ',';
        for (std::size_t t = 0; t < res.tokens.size(); ++t) {
            if (t) os << ' ';
            os << res.tokens[t];
        }
        rows[std::size_t(i)] = os.str();
    });
    out << "variant,alpha,steps,emitted,attn_proj,attn_score,ffn,moe_expert,"
           "moe_router,other,total,draft_total,s_a,s_f,s_e,tokens\n";
    for (const std::string& r : rows) out << r << '\n';
}

void cmd_flops(const ModelConfig& cfg, long long tokens, double s_a, double s_f,
               double s_e, std::ostream& out) {
    FlopsParams p;
    p.batch = 1;
    p.tokens = tokens;
    p.hidden = cfg.hidden;
    p.ffn_hidden = cfg.ffn_hidden;
    p.expert_hidden = cfg.expert_hidden;
    p.experts = cfg.num_experts;
    p.active = cfg.active_experts;
    p.layers = 1; // per-layer costs
    p.s_a = s_a;
    p.s_f = s_f;
    p.s_e = s_e;
    p.validate();
    out << "component,dense_flops,sparse_flops,sparsity,reduction_ratio\n";
    const auto row = [&out](const char* name, double dense, double sparse, double s) {
        out << name << ',' << fmt(dense) << ',' << fmt(sparse) << ',' << fmt(s) << ','
            << fmt(dense > 0.0 ? sparse / dense : 1.0) << '\n';
    };
    row("attention", attention_flops(p, false), attention_flops(p, true), s_a);
    row("ffn", ffn_flops(p, false), ffn_flops(p, true), s_f);
    row("moe", moe_flops(p, false), moe_flops(p, true), s_e);
    row("moe_gated", moe_flops_gated(p, false), moe_flops_gated(p, true), s_e);
}

} // namespace sv
