#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hoi/checkpoint.hpp"
#include "hoi/geom_encoder.hpp"
#include "hoi/layers.hpp"
#include "hoi/optim.hpp"
#include "hoi/rng.hpp"
#include "hoi/vocab.hpp"

namespace hoi {

struct TransformerConfig {
    int n_layers = 2;
    int d_model = 64;
    int n_q_heads = 4;
    int n_kv_heads = 2;
    int d_kv = 16;
    int d_ff = 128;
    int vocab_size = 0;       // total unified vocab
    int text_vocab_size = 0;  // leading word-token rows (frozen under LoRA)
    int max_seq = 256;
    double rope_base = 10000.0;
    double init_std = 0.02;
    double norm_eps = 1e-5;
    bool rms_norm = true;    // false: LayerNorm
    bool gated_ffn = true;   // false: GELU FFN
    GeomEncoderConfig geom;

    void validate() const {
        if (n_q_heads % n_kv_heads != 0) {
            throw config_error("query heads (" + std::to_string(n_q_heads) +
                               ") must be divisible by kv heads (" + std::to_string(n_kv_heads) +
                               ")");
        }
        if (d_model != n_q_heads * d_kv) {
            throw config_error("d_model must equal n_q_heads * d_kv");
        }
        if (d_kv % 2 != 0) throw config_error("d_kv must be even for rotary positions");
        if (vocab_size <= 0 || text_vocab_size <= 0 || text_vocab_size >= vocab_size) {
            throw config_error("vocab split must satisfy 0 < text < total");
        }
        if (geom.d_model != d_model) throw config_error("geometry feature width must equal d_model");
    }
};

struct LoraConfig {
    int rank = 8;
    double alpha = 4.0;
    double init_std = 0.02;
};

template <typename S>
struct LoraAdapter {
    std::string target;
    Param<S> a;  // r x d_in
    Param<S> b;  // d_out x r
    int rank = 0;
    double alpha = 0;
};

// One padded sequence batch is never materialized; training works on ragged
// per-sequence token lists with an explicit loss mask and OGT slot.
struct SequenceExample {
    std::vector<int> tokens;      // source followed by target
    std::vector<int> targets;     // next-token target per position (size tokens-1 context handled by caller)
    std::vector<char> loss_mask;  // true where the position's next-token loss counts
    int ogt_pos = -1;             // index of the OGT token, -1 when absent
};

// Decoder-only causal LM over the unified vocabulary. Pre-norm blocks with
// grouped-query attention and rotary positions; the FFN is a SiLU-gated
// linear unit (config-switchable to GELU, norms to LayerNorm). Token
// embeddings are tied to the output projection; text rows and the rest live
// in separate tables so LoRA can freeze the former while the new motion and
// special rows keep training.
template <typename S>
class TransformerModel {
public:
    TransformerConfig config;
    GeomEncoder<S> geom;

    TransformerModel() = default;

    TransformerModel(TransformerConfig cfg, std::uint64_t seed) : config(cfg) {
        config.validate();
        geom = GeomEncoder<S>(config.geom, seed ^ 0x9e37, "geom.");
        Rng rng = Rng::derive(seed, 0x11a0);
        const int d = config.d_model;

        add_gauss(rng, "embed.text", {config.text_vocab_size, d});
        add_gauss(rng, "embed.rest", {config.vocab_size - config.text_vocab_size, d});
        for (int l = 0; l < config.n_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            add_norm(p + "attn_norm", d);
            add_gauss(rng, p + "attn.wq", {config.n_q_heads * config.d_kv, d});
            add_gauss(rng, p + "attn.wk", {config.n_kv_heads * config.d_kv, d});
            add_gauss(rng, p + "attn.wv", {config.n_kv_heads * config.d_kv, d});
            add_gauss(rng, p + "attn.wo", {d, config.n_q_heads * config.d_kv});
            add_norm(p + "ffn_norm", d);
            if (config.gated_ffn) add_gauss(rng, p + "ffn.w_gate", {config.d_ff, d});
            add_gauss(rng, p + "ffn.w_up", {config.d_ff, d});
            add_gauss(rng, p + "ffn.w_down", {d, config.d_ff});
        }
        add_norm("final_norm", d);
    }

    // All parameters (backbone, embeddings, geometry encoder, adapters).
    std::vector<Param<S>*> params() {
        std::vector<Param<S>*> out;
        for (auto& p : params_) out.push_back(&p);
        for (auto* p : geom.params()) out.push_back(p);
        for (auto& a : adapters_) {
            out.push_back(&a.a);
            out.push_back(&a.b);
        }
        return out;
    }

    Param<S>& param(const std::string& name) {
        for (auto& p : params_) {
            if (p.name == name) return p;
        }
        throw domain_error("model has no parameter '" + name + "'");
    }

    bool has_param(const std::string& name) const {
        for (const auto& p : params_) {
            if (p.name == name) return true;
        }
        return false;
    }

    // Names LoRA can target: attention and FFN projections of every layer.
    std::vector<std::string> lora_target_names() const {
        std::vector<std::string> names;
        for (int l = 0; l < config.n_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            for (const char* t : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
                names.push_back(p + t);
            if (config.gated_ffn) names.push_back(p + "ffn.w_gate");
            names.push_back(p + "ffn.w_up");
            names.push_back(p + "ffn.w_down");
        }
        return names;
    }

    // Attach zero-initialized-B adapters and freeze the backbone; the
    // non-text embedding rows and the geometry encoder keep training.
    void lora_attach(const LoraConfig& lc, std::uint64_t seed,
                     const std::vector<std::string>& targets = {}) {
        if (!adapters_.empty()) throw domain_error("adapters already attached; merge first");
        const auto names = targets.empty() ? lora_target_names() : targets;
        Rng rng = Rng::derive(seed, 0x10a0);
        for (const auto& name : names) {
            if (!has_param(name)) throw domain_error("LoRA target '" + name + "' does not exist");
            const auto& w = param(name).value();
            LoraAdapter<S> ad;
            ad.target = name;
            ad.rank = lc.rank;
            ad.alpha = lc.alpha;
            Tensor<S> a({lc.rank, w.dim(1)});
            for (auto& v : a.data) v = static_cast<S>(rng.gaussian() * lc.init_std);
            ad.a = Param<S>(std::move(a), name + ".lora_a");
            ad.b = Param<S>(Tensor<S>({w.dim(0), lc.rank}), name + ".lora_b");
            adapters_.push_back(std::move(ad));
        }
        for (auto& p : params_) p.trainable = (p.name == "embed.rest");
    }

    // Fold every adapter into its base weight and unfreeze the backbone.
    void lora_merge() {
        for (auto& ad : adapters_) {
            auto& w = param(ad.target).value();
            const auto& a = ad.a.value();
            const auto& b = ad.b.value();
            const double s = ad.alpha / ad.rank;
            for (int i = 0; i < w.dim(0); ++i) {
                for (int j = 0; j < w.dim(1); ++j) {
                    double acc = 0;
                    for (int r = 0; r < ad.rank; ++r)
                        acc += static_cast<double>(b.at(i, r)) * a.at(r, j);
                    w.at(i, j) += static_cast<S>(s * acc);
                }
            }
        }
        adapters_.clear();
        for (auto& p : params_) p.trainable = true;
    }

    bool adapters_attached() const { return !adapters_.empty(); }

    // Causal forward over one sequence; returns S x V logits. `geom_feature`
    // must be provided iff ogt_pos >= 0. `pos_offset` shifts rotary position
    // ids (used by relative-position tests; always 0 in the pipeline).
    Var<S> forward(const std::vector<int>& tokens, int ogt_pos, const Var<S>& geom_feature,
                   bool build_graph = true, int pos_offset = 0) {
        const int s_len = static_cast<int>(tokens.size());
        if (s_len < 1) throw shape_error("forward: empty token sequence");
        if (s_len > config.max_seq) {
            throw shape_error("sequence of " + std::to_string(s_len) +
                              " tokens exceeds max length " + std::to_string(config.max_seq));
        }
        if (ogt_pos >= 0 && !geom_feature.defined()) {
            throw domain_error("sequence contains the geometry token but no feature was provided");
        }

        Var<S> h = embed_rows(pvar("embed.text", build_graph), pvar("embed.rest", build_graph),
                              tokens, ogt_pos, geom_feature);
        for (int l = 0; l < config.n_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            Var<S> a_in = norm(h, p + "attn_norm", build_graph);
            Var<S> q = linear(a_in, p + "attn.wq", build_graph);
            Var<S> k = linear(a_in, p + "attn.wk", build_graph);
            Var<S> v = linear(a_in, p + "attn.wv", build_graph);
            q = rope(reshape(q, {s_len, config.n_q_heads, config.d_kv}), config.rope_base,
                     pos_offset);
            k = rope(reshape(k, {s_len, config.n_kv_heads, config.d_kv}), config.rope_base,
                     pos_offset);
            Var<S> v3 = reshape(v, {s_len, config.n_kv_heads, config.d_kv});
            Var<S> att = gqa_attention(q, k, v3);
            att = reshape(att, {s_len, config.n_q_heads * config.d_kv});
            h = add(h, linear(att, p + "attn.wo", build_graph));
            Var<S> f_in = norm(h, p + "ffn_norm", build_graph);
            Var<S> ff;
            if (config.gated_ffn) {
                Var<S> gate = silu(linear(f_in, p + "ffn.w_gate", build_graph));
                Var<S> up = linear(f_in, p + "ffn.w_up", build_graph);
                ff = linear(mul(gate, up), p + "ffn.w_down", build_graph);
            } else {
                ff = linear(gelu(linear(f_in, p + "ffn.w_up", build_graph)), p + "ffn.w_down",
                            build_graph);
            }
            h = add(h, ff);
        }
        h = norm(h, "final_norm", build_graph);
        // tied output projection
        Var<S> table = concat_rows(pvar("embed.text", build_graph), pvar("embed.rest", build_graph));
        return matmul(h, transpose(table));
    }

    // Mean next-token cross-entropy over masked positions: position i is
    // scored against tokens[i+1]; mask length is tokens.size()-1.
    Var<S> lm_loss(const Var<S>& logits, const std::vector<int>& tokens,
                   const std::vector<char>& target_mask) {
        const int s_len = static_cast<int>(tokens.size());
        if (logits.val().dim(0) != s_len) throw shape_error("lm_loss: logits/token length mismatch");
        if (static_cast<int>(target_mask.size()) != s_len - 1) {
            throw shape_error("lm_loss: mask must cover the " + std::to_string(s_len - 1) +
                              " next-token positions");
        }
        bool any = false;
        for (char m : target_mask) any = any || m;
        if (!any) throw domain_error("lm_loss: empty loss mask");
        // score rows 0..S-2 against the following token
        Var<S> ctx = slice_rows(logits, 0, s_len - 1);
        std::vector<int> targets(tokens.begin() + 1, tokens.end());
        return cross_entropy_from_logits(ctx, targets, target_mask);
    }

    struct DecodeParams {
        int max_new = 128;
        double temperature = 0.0;
        int top_k = 0;  // 0: full distribution
        std::uint64_t seed = 0;
    };

    // Autoregressive sampling; returns generated tokens (stop token included).
    std::vector<int> generate(const std::vector<int>& source, int ogt_pos,
                              const Var<S>& geom_feature, const std::set<int>& stop_tokens,
                              const DecodeParams& dp) {
        if (source.empty()) throw domain_error("generate: empty source");
        if (dp.temperature < 0) throw domain_error("generate: negative temperature");
        Rng rng = Rng::derive(dp.seed, 0xd3c0);
        std::vector<int> tokens = source;
        std::vector<int> out;
        for (int step = 0; step < dp.max_new; ++step) {
            if (static_cast<int>(tokens.size()) >= config.max_seq) break;
            Var<S> logits = forward(tokens, ogt_pos, geom_feature, /*build_graph=*/false);
            const int v = logits.val().dim(1);
            const S* row = logits.val().row(logits.val().dim(0) - 1);
            int next;
            if (dp.temperature == 0.0) {
                next = 0;
                for (int j = 1; j < v; ++j) {
                    if (row[j] > row[next]) next = j;
                }
            } else {
                next = sample_from_logits(row, v, dp.temperature, dp.top_k, rng);
            }
            out.push_back(next);
            tokens.push_back(next);
            if (stop_tokens.count(next)) break;
        }
        return out;
    }

    Checkpoint to_checkpoint() {
        if (!adapters_.empty()) {
            throw domain_error("cannot snapshot a model with attached adapters; merge first");
        }
        std::vector<Param<S>*> ps;
        for (auto& p : params_) ps.push_back(&p);
        for (auto* p : geom.params()) ps.push_back(p);
        return params_to_checkpoint(ps);
    }

    void load(const Checkpoint& ck) {
        if (!adapters_.empty()) throw domain_error("cannot load into a model with attached adapters");
        std::vector<Param<S>*> ps;
        for (auto& p : params_) ps.push_back(&p);
        for (auto* p : geom.params()) ps.push_back(p);
        load_params_from_checkpoint(ck, ps);
    }

private:
    void add_gauss(Rng& rng, const std::string& name, Shape dims) {
        Tensor<S> t(std::move(dims));
        for (auto& v : t.data) v = static_cast<S>(rng.gaussian() * config.init_std);
        params_.emplace_back(std::move(t), name);
    }

    void add_norm(const std::string& name, int d) {
        params_.emplace_back(Tensor<S>::full({d}, S(1)), name);
        if (!config.rms_norm) params_.emplace_back(Tensor<S>({d}), name + "_beta");
    }

    // Parameter view: graph-attached for training, detached constant for
    // inference so generation does not record a tape.
    Var<S> pvar(const std::string& name, bool build_graph) {
        Param<S>& p = param(name);
        return build_graph ? p.var : constant(Tensor<S>(p.value()));
    }

    Var<S> norm(const Var<S>& x, const std::string& name, bool build_graph) {
        if (config.rms_norm) {
            return rmsnorm_rows(x, pvar(name, build_graph), static_cast<S>(config.norm_eps));
        }
        return layernorm_rows(x, pvar(name, build_graph), pvar(name + "_beta", build_graph),
                              static_cast<S>(config.norm_eps));
    }

    Var<S> linear(const Var<S>& x, const std::string& name, bool build_graph) {
        Var<S> y = matmul(x, transpose(pvar(name, build_graph)));
        for (auto& ad : adapters_) {
            if (ad.target != name) continue;
            Var<S> a = build_graph ? ad.a.var : constant(Tensor<S>(ad.a.value()));
            Var<S> b = build_graph ? ad.b.var : constant(Tensor<S>(ad.b.value()));
            Var<S> delta = matmul(matmul(x, transpose(a)), transpose(b));
            y = add(y, scale(delta, static_cast<S>(ad.alpha / ad.rank)));
        }
        return y;
    }

    int sample_from_logits(const S* row, int v, double temperature, int top_k, Rng& rng) {
        std::vector<std::pair<double, int>> scored(static_cast<std::size_t>(v));
        for (int j = 0; j < v; ++j) scored[static_cast<std::size_t>(j)] = {static_cast<double>(row[j]), j};
        if (top_k > 0 && top_k < v) {
            std::stable_sort(scored.begin(), scored.end(),
                             [](auto& a, auto& b) { return a.first > b.first; });
            scored.resize(static_cast<std::size_t>(top_k));
        }
        double mx = scored[0].first;
        for (const auto& [s, j] : scored) mx = std::max(mx, s);
        double total = 0;
        std::vector<double> probs(scored.size());
        for (std::size_t i = 0; i < scored.size(); ++i) {
            probs[i] = std::exp((scored[i].first - mx) / temperature);
            total += probs[i];
        }
        const double u = rng.uniform() * total;
        double cum = 0;
        for (std::size_t i = 0; i < scored.size(); ++i) {
            cum += probs[i];
            if (u < cum) return scored[i].second;
        }
        return scored.back().second;
    }

    std::vector<Param<S>> params_;
    std::vector<LoraAdapter<S>> adapters_;
};

}  // namespace hoi
