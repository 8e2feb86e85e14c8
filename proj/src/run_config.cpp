#include "hoi/run_config.hpp"

#include <fstream>

#include <json.hpp>

namespace hoi {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json tokenizer_to_json(const TokenizerConfig& t) {
    return json{{"input_dim", t.input_dim},
                {"widths", t.widths},
                {"downsample", t.downsample},
                {"codebook_k", t.codebook_k},
                {"codebook_d", t.codebook_d},
                {"beta_commit", t.beta_commit},
                {"lambda_velocity", t.lambda_velocity},
                {"ema", t.ema},
                {"ema_decay", t.ema_decay},
                {"usage_epsilon", t.usage_epsilon},
                {"reset_threshold", t.reset_threshold},
                {"reset", t.reset_enabled},
                {"lr", t.lr},
                {"batch", t.batch},
                {"weight_decay", t.weight_decay}};
}

void tokenizer_from_json(const json& j, TokenizerConfig& t) {
    maybe(j, "input_dim", t.input_dim);
    maybe(j, "widths", t.widths);
    maybe(j, "downsample", t.downsample);
    maybe(j, "codebook_k", t.codebook_k);
    maybe(j, "codebook_d", t.codebook_d);
    maybe(j, "beta_commit", t.beta_commit);
    maybe(j, "lambda_velocity", t.lambda_velocity);
    maybe(j, "ema", t.ema);
    maybe(j, "ema_decay", t.ema_decay);
    maybe(j, "usage_epsilon", t.usage_epsilon);
    maybe(j, "reset_threshold", t.reset_threshold);
    maybe(j, "reset", t.reset_enabled);
    maybe(j, "lr", t.lr);
    maybe(j, "batch", t.batch);
    maybe(j, "weight_decay", t.weight_decay);
}

json stage_to_json(const StageConfig& s) {
    return json{{"epochs", s.epochs},       {"lr", s.lr},
                {"batch", s.batch},         {"weight_decay", s.weight_decay},
                {"lora_rank", s.lora_rank}, {"lora_alpha", s.lora_alpha}};
}

void stage_from_json(const json& j, StageConfig& s) {
    maybe(j, "epochs", s.epochs);
    maybe(j, "lr", s.lr);
    maybe(j, "batch", s.batch);
    maybe(j, "weight_decay", s.weight_decay);
    maybe(j, "lora_rank", s.lora_rank);
    maybe(j, "lora_alpha", s.lora_alpha);
}

json lm_to_json(const TransformerConfig& m) {
    return json{{"n_layers", m.n_layers},
                {"d_model", m.d_model},
                {"n_q_heads", m.n_q_heads},
                {"n_kv_heads", m.n_kv_heads},
                {"d_kv", m.d_kv},
                {"d_ff", m.d_ff},
                {"vocab_size", m.vocab_size},
                {"text_vocab_size", m.text_vocab_size},
                {"max_seq", m.max_seq},
                {"rope_base", m.rope_base},
                {"init_std", m.init_std},
                {"norm_eps", m.norm_eps},
                {"rms_norm", m.rms_norm},
                {"gated_ffn", m.gated_ffn},
                {"geom_conv_widths", m.geom.conv_widths},
                {"geom_mlp_hidden", m.geom.mlp_hidden}};
}

void lm_from_json(const json& j, TransformerConfig& m) {
    maybe(j, "n_layers", m.n_layers);
    maybe(j, "d_model", m.d_model);
    maybe(j, "n_q_heads", m.n_q_heads);
    maybe(j, "n_kv_heads", m.n_kv_heads);
    maybe(j, "d_kv", m.d_kv);
    maybe(j, "d_ff", m.d_ff);
    maybe(j, "vocab_size", m.vocab_size);
    maybe(j, "text_vocab_size", m.text_vocab_size);
    maybe(j, "max_seq", m.max_seq);
    maybe(j, "rope_base", m.rope_base);
    maybe(j, "init_std", m.init_std);
    maybe(j, "norm_eps", m.norm_eps);
    maybe(j, "rms_norm", m.rms_norm);
    maybe(j, "gated_ffn", m.gated_ffn);
    maybe(j, "geom_conv_widths", m.geom.conv_widths);
    maybe(j, "geom_mlp_hidden", m.geom.mlp_hidden);
    m.geom.d_model = m.d_model;
}

}  // namespace

RunConfig::RunConfig() {
    tokenizer_human.input_dim = 24;
    tokenizer_object.input_dim = 6;
    lm.geom.d_model = lm.d_model;
}

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["data"] = json{{"n", data.n},
                     {"frames", data.frames},
                     {"fps", data.fps},
                     {"points", data.points},
                     {"train_fraction", data.train_fraction}};
    j["tokenizer_human"] = tokenizer_to_json(tokenizer_human);
    j["tokenizer_object"] = tokenizer_to_json(tokenizer_object);
    j["tokenizer_epochs"] = tokenizer_epochs;
    j["lm"] = lm_to_json(lm);
    j["stage1"] = stage_to_json(stage1);
    j["stage2"] = stage_to_json(stage2);
    j["decode"] = json{{"max_new", decode.max_new},
                       {"temperature", decode.temperature},
                       {"top_k", decode.top_k},
                       {"repair", decode.repair}};
    j["eval"] = json{{"r_precision_pool", eval.r_precision_pool},
                     {"diversity_pairs", eval.diversity_pairs}};
    return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config is not valid JSON (") + e.what() + ")");
    }
    RunConfig cfg;
    try {
        maybe(j, "seed", cfg.seed);
        maybe(j, "out_dir", cfg.out_dir);
        if (j.contains("data")) {
            const auto& d = j.at("data");
            maybe(d, "n", cfg.data.n);
            maybe(d, "frames", cfg.data.frames);
            maybe(d, "fps", cfg.data.fps);
            maybe(d, "points", cfg.data.points);
            maybe(d, "train_fraction", cfg.data.train_fraction);
        }
        if (j.contains("tokenizer_human")) tokenizer_from_json(j.at("tokenizer_human"), cfg.tokenizer_human);
        if (j.contains("tokenizer_object")) tokenizer_from_json(j.at("tokenizer_object"), cfg.tokenizer_object);
        maybe(j, "tokenizer_epochs", cfg.tokenizer_epochs);
        if (j.contains("lm")) lm_from_json(j.at("lm"), cfg.lm);
        if (j.contains("stage1")) stage_from_json(j.at("stage1"), cfg.stage1);
        if (j.contains("stage2")) stage_from_json(j.at("stage2"), cfg.stage2);
        if (j.contains("decode")) {
            const auto& d = j.at("decode");
            maybe(d, "max_new", cfg.decode.max_new);
            maybe(d, "temperature", cfg.decode.temperature);
            maybe(d, "top_k", cfg.decode.top_k);
            maybe(d, "repair", cfg.decode.repair);
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            maybe(e, "r_precision_pool", cfg.eval.r_precision_pool);
            maybe(e, "diversity_pairs", cfg.eval.diversity_pairs);
        }
    } catch (const json::exception& e) {
        throw config_error(std::string("config has bad fields (") + e.what() + ")");
    }
    if (cfg.data.n < 1 || cfg.data.frames < 8) {
        throw config_error("data.n must be >= 1 and data.frames >= 8");
    }
    if (cfg.data.train_fraction <= 0.0 || cfg.data.train_fraction > 1.0) {
        throw config_error("data.train_fraction must lie in (0, 1]");
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << to_json();
}

std::string transformer_config_to_json(const TransformerConfig& cfg, std::uint64_t vocab_hash,
                                       int stage) {
    json j = lm_to_json(cfg);
    j["vocab_hash"] = vocab_hash;
    j["stage"] = stage;
    return j.dump(2) + "\n";
}

TransformerConfig transformer_config_from_json(const std::string& text, std::uint64_t* vocab_hash,
                                               int* stage) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw format_error(std::string("model sidecar is not valid JSON (") + e.what() + ")");
    }
    TransformerConfig cfg;
    lm_from_json(j, cfg);
    if (vocab_hash) {
        *vocab_hash = 0;
        maybe(j, "vocab_hash", *vocab_hash);
    }
    if (stage) {
        *stage = 0;
        maybe(j, "stage", *stage);
    }
    return cfg;
}

}  // namespace hoi
