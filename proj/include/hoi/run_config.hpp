#pragma once

#include <cstdint>
#include <string>

#include "hoi/transformer.hpp"
#include "hoi/vqvae.hpp"

namespace hoi {

struct DataConfig {
    int n = 200;
    int frames = 32;
    float fps = 30.0f;
    int points = 64;
    double train_fraction = 0.8;
};

struct StageConfig {
    int epochs = 30;
    double lr = 1e-3;
    int batch = 8;
    double weight_decay = 0.01;
    int lora_rank = 8;
    double lora_alpha = 4.0;
};

struct DecodeConfig {
    int max_new = 160;
    double temperature = 0.0;
    int top_k = 0;
    bool repair = false;
};

struct EvalConfig {
    int r_precision_pool = 8;
    int diversity_pairs = 64;
};

// Everything a run needs, JSON-backed with desk-scale defaults. Paper-scale
// values (codebook 512x4096, 36 layers, d_model 4096, GQA 32/8, d_ff 25600,
// LoRA 1024/512 then 256/128, lr 2e-4 / 2e-5 / 1e-6) are accepted through the
// same fields.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "run/default";
    DataConfig data;
    TokenizerConfig tokenizer_human;
    TokenizerConfig tokenizer_object;
    int tokenizer_epochs = 30;
    TransformerConfig lm;
    StageConfig stage1{30, 1e-3, 8, 0.01, 8, 4.0};
    StageConfig stage2{10, 1e-4, 8, 0.01, 4, 2.0};
    DecodeConfig decode;
    EvalConfig eval;

    RunConfig();

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig from_file(const std::string& path);
    void save(const std::string& path) const;
};

// Sidecar helpers for LM checkpoints (config + vocab hash).
std::string transformer_config_to_json(const TransformerConfig& cfg, std::uint64_t vocab_hash,
                                       int stage);
TransformerConfig transformer_config_from_json(const std::string& text, std::uint64_t* vocab_hash,
                                               int* stage);

}  // namespace hoi
