#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "hoi/checkpoint.hpp"
#include "hoi/layers.hpp"
#include "hoi/log.hpp"
#include "hoi/motion.hpp"
#include "hoi/optim.hpp"
#include "hoi/rng.hpp"

namespace hoi {

// Quantization table with EMA statistics.
template <typename S>
struct Codebook {
    Param<S> entries;     // K x d
    Tensor<S> ema_counts;  // K
    Tensor<S> ema_sums;    // K x d
    double decay = 0.99;
    double usage_epsilon = 1e-5;

    int size() const { return entries.value().dim(0); }
    int dim() const { return entries.value().dim(1); }
};

struct TokenizerConfig {
    int input_dim = 24;
    std::vector<int> widths{64, 128};  // conv stage widths; one stride-2 stage per width after the first
    int downsample = 2;                // l, power of two
    int codebook_k = 64;
    int codebook_d = 32;
    double beta_commit = 0.25;
    double lambda_velocity = 1.0;
    bool ema = true;                   // codebook learns via EMA; embedding loss kept for logging
    double ema_decay = 0.99;
    double usage_epsilon = 1e-5;
    double reset_threshold = 1.0;
    bool reset_enabled = true;
    double lr = 2e-4;
    int batch = 16;
    double weight_decay = 0.0;

    int downsample_stages() const {
        int l = downsample, stages = 0;
        while (l > 1) {
            if (l % 2 != 0) throw config_error("downsample rate must be a power of two");
            l /= 2;
            ++stages;
        }
        return stages;
    }

    void validate() const {
        if (input_dim < 1) throw config_error("tokenizer input_dim must be positive");
        if (codebook_k < 2) throw config_error("codebook needs at least 2 entries");
        if (downsample < 1) throw config_error("downsample rate must be >= 1");
        const int stages = downsample_stages();
        if (static_cast<int>(widths.size()) != stages + 1) {
            throw config_error("tokenizer widths must list " + std::to_string(stages + 1) +
                               " stage widths for downsample " + std::to_string(downsample));
        }
    }
};

template <typename S>
struct QuantizeResult {
    Tensor<S> quantized;       // m x d
    std::vector<int> indices;  // m
};

// Nearest codebook entry per latent row; ties break toward the lowest index.
template <typename S>
QuantizeResult<S> quantize(const Codebook<S>& codebook, const Tensor<S>& latents) {
    if (latents.rank() != 2 || latents.dim(1) != codebook.dim()) {
        throw shape_error("quantize: latents " + shape_str(latents.dims) + " vs codebook dim " +
                          std::to_string(codebook.dim()));
    }
    if (!latents.all_finite()) throw domain_error("quantize: non-finite latents");
    const int m = latents.dim(0), d = latents.dim(1), k = codebook.size();
    QuantizeResult<S> out;
    out.quantized = Tensor<S>({m, d});
    out.indices.resize(static_cast<std::size_t>(m));
    const auto& entries = codebook.entries.value();
    for (int i = 0; i < m; ++i) {
        const S* z = latents.row(i);
        double best = 1e300;
        int best_k = 0;
        for (int e = 0; e < k; ++e) {
            const S* c = entries.row(e);
            double dist = 0;
            for (int j = 0; j < d; ++j) {
                const double diff = static_cast<double>(z[j]) - static_cast<double>(c[j]);
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                best_k = e;
            }
        }
        out.indices[static_cast<std::size_t>(i)] = best_k;
        std::copy(entries.row(best_k), entries.row(best_k) + d, out.quantized.row(i));
    }
    return out;
}

// Motion tokenizer: temporal conv encoder, nearest-neighbor quantizer with a
// straight-through gradient, mirrored conv decoder with nearest-neighbor
// upsampling. Input normalization statistics ride along as fixed tensors.
template <typename S>
class MotionTokenizer {
public:
    TokenizerConfig config;
    Codebook<S> codebook;

    MotionTokenizer() = default;

    MotionTokenizer(TokenizerConfig cfg, std::uint64_t seed) : config(cfg) {
        config.validate();
        Rng rng = Rng::derive(seed, 0x70c1);
        const int d = config.codebook_d;
        const int stages = config.downsample_stages();
        const auto& w = config.widths;

        auto conv_param = [&](const std::string& name, int c_out, int c_in, int k) {
            Tensor<S> t({c_out, c_in, k});
            const double std_dev = std::sqrt(2.0 / (c_in * k));
            for (auto& v : t.data) v = static_cast<S>(rng.gaussian() * std_dev);
            params_.emplace_back(std::move(t), name);
            params_.emplace_back(Tensor<S>({c_out}), name + "_bias");
        };

        conv_param("enc.conv_in", w[0], config.input_dim, 3);
        for (int i = 0; i < stages; ++i) {
            conv_param("enc.down" + std::to_string(i), w[static_cast<std::size_t>(i) + 1],
                       w[static_cast<std::size_t>(i)], 4);
        }
        conv_param("enc.proj", d, w.back(), 3);
        conv_param("dec.proj", w.back(), d, 3);
        for (int i = stages - 1; i >= 0; --i) {
            conv_param("dec.up" + std::to_string(i), w[static_cast<std::size_t>(i)],
                       w[static_cast<std::size_t>(i) + 1], 3);
        }
        conv_param("dec.conv_out", config.input_dim, w[0], 3);

        Tensor<S> entries({config.codebook_k, d});
        for (auto& v : entries.data) v = static_cast<S>(rng.gaussian() * 0.1);
        codebook.entries = Param<S>(std::move(entries), "codebook.entries");
        codebook.ema_counts = Tensor<S>::full({config.codebook_k}, S(1));
        codebook.ema_sums = codebook.entries.value();
        codebook.decay = config.ema_decay;
        codebook.usage_epsilon = config.usage_epsilon;
        codebook.entries.trainable = !config.ema;

        feature_mean = Tensor<S>({config.input_dim});
        feature_std = Tensor<S>::full({config.input_dim}, S(1));
    }

    // Trainable parameters (codebook entries included only in non-EMA mode).
    std::vector<Param<S>*> params() {
        std::vector<Param<S>*> out;
        for (auto& p : params_) out.push_back(&p);
        out.push_back(&codebook.entries);
        return out;
    }

    Param<S>& param(const std::string& name) {
        for (auto& p : params_) {
            if (p.name == name) return p;
        }
        throw domain_error("tokenizer has no parameter '" + name + "'");
    }

    // L -> ceil(L / l) after right-padding with the last frame.
    static int padded_length(int frames, int l) { return (frames + l - 1) / l * l; }

    Tensor<S> normalize(const MotionSequence& motion) const {
        if (motion.rank() != 2 || motion.dim(1) != config.input_dim) {
            throw shape_error("tokenizer expects L x " + std::to_string(config.input_dim) +
                              ", got " + shape_str(motion.dims));
        }
        if (motion.dim(0) < config.downsample) {
            throw shape_error("sequence of " + std::to_string(motion.dim(0)) +
                              " frames shorter than downsample rate " +
                              std::to_string(config.downsample));
        }
        const int l_pad = padded_length(motion.dim(0), config.downsample);
        Tensor<S> x({l_pad, config.input_dim});
        for (int i = 0; i < l_pad; ++i) {
            const int src = std::min(i, motion.dim(0) - 1);
            for (int j = 0; j < config.input_dim; ++j) {
                x.at(i, j) = (static_cast<S>(motion.at(src, j)) - feature_mean.at(j)) /
                             feature_std.at(j);
            }
        }
        return x;
    }

    MotionSequence denormalize(const Tensor<S>& x, int trim_frames) const {
        MotionSequence out({trim_frames, config.input_dim});
        for (int i = 0; i < trim_frames; ++i) {
            for (int j = 0; j < config.input_dim; ++j) {
                out.at(i, j) = static_cast<float>(x.at(i, j) * feature_std.at(j) +
                                                  feature_mean.at(j));
            }
        }
        return out;
    }

    // Graph-building encoder over a normalized input.
    Var<S> encode_graph(const Var<S>& x) {
        Var<S> h = conv_block(x, "enc.conv_in", 1, 1);
        h = relu(h);
        for (int i = 0; i < config.downsample_stages(); ++i) {
            h = conv_block(h, "enc.down" + std::to_string(i), 2, 1);
            h = relu(h);
        }
        return conv_block(h, "enc.proj", 1, 1);
    }

    Var<S> decode_graph(const Var<S>& q) {
        Var<S> h = conv_block(q, "dec.proj", 1, 1);
        h = relu(h);
        for (int i = config.downsample_stages() - 1; i >= 0; --i) {
            h = upsample_nearest(h, 2);
            h = conv_block(h, "dec.up" + std::to_string(i), 1, 1);
            h = relu(h);
        }
        return conv_block(h, "dec.conv_out", 1, 1);
    }

    // Inference-style encode: motion -> latents (m x d).
    Tensor<S> encode(const MotionSequence& motion) {
        Var<S> x = constant(normalize(motion));
        return encode_graph(x).val();
    }

    std::vector<int> encode_indices(const MotionSequence& motion) {
        return quantize(codebook, encode(motion)).indices;
    }

    // Inference-style decode from codebook indices (or quantized latents).
    MotionSequence decode(const Tensor<S>& quantized) {
        if (quantized.rank() != 2 || quantized.dim(1) != config.codebook_d || quantized.dim(0) < 1) {
            throw shape_error("decode expects m x " + std::to_string(config.codebook_d) +
                              " with m >= 1, got " + shape_str(quantized.dims));
        }
        Var<S> q = constant(Tensor<S>(quantized));
        Var<S> y = decode_graph(q);
        return denormalize(y.val(), y.val().dim(0));
    }

    MotionSequence decode_indices(const std::vector<int>& indices) {
        if (indices.empty()) throw shape_error("decode: empty index list");
        Tensor<S> q({static_cast<int>(indices.size()), config.codebook_d});
        const auto& entries = codebook.entries.value();
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const int id = indices[i];
            if (id < 0 || id >= config.codebook_k) {
                throw range_error("decode: codebook index " + std::to_string(id) +
                                  " outside [0, " + std::to_string(config.codebook_k) + ")");
            }
            std::copy(entries.row(id), entries.row(id) + config.codebook_d,
                      q.row(static_cast<int>(i)));
        }
        return decode(q);
    }

    MotionSequence reconstruct(const MotionSequence& motion) {
        auto qr = quantize(codebook, encode(motion));
        MotionSequence out = decode(qr.quantized);
        MotionSequence trimmed({motion.dim(0), config.input_dim});
        for (int i = 0; i < motion.dim(0); ++i)
            std::copy(out.row(i), out.row(i) + config.input_dim, trimmed.row(i));
        return trimmed;
    }

    Checkpoint to_checkpoint() {
        auto ps = params();
        Checkpoint ck = params_to_checkpoint(ps);
        CheckpointEntry counts{"codebook.ema_counts", codebook.ema_counts.dims, {}};
        counts.data.resize(codebook.ema_counts.data.size());
        for (std::size_t i = 0; i < counts.data.size(); ++i)
            counts.data[i] = static_cast<float>(codebook.ema_counts.data[i]);
        ck.push_back(std::move(counts));
        CheckpointEntry sums{"codebook.ema_sums", codebook.ema_sums.dims, {}};
        sums.data.resize(codebook.ema_sums.data.size());
        for (std::size_t i = 0; i < sums.data.size(); ++i)
            sums.data[i] = static_cast<float>(codebook.ema_sums.data[i]);
        ck.push_back(std::move(sums));
        ck.push_back(tensor_entry("norm.mean", feature_mean));
        ck.push_back(tensor_entry("norm.std", feature_std));
        return ck;
    }

    void load(const Checkpoint& ck) {
        auto ps = params();
        load_params_from_checkpoint(ck, ps);
        load_tensor(ck, "codebook.ema_counts", codebook.ema_counts);
        load_tensor(ck, "codebook.ema_sums", codebook.ema_sums);
        load_tensor(ck, "norm.mean", feature_mean);
        load_tensor(ck, "norm.std", feature_std);
    }

    Tensor<S> feature_mean;
    Tensor<S> feature_std;

private:
    static CheckpointEntry tensor_entry(const std::string& name, const Tensor<S>& t) {
        CheckpointEntry e{name, t.dims, {}};
        e.data.resize(t.data.size());
        for (std::size_t i = 0; i < t.data.size(); ++i) e.data[i] = static_cast<float>(t.data[i]);
        return e;
    }

    static void load_tensor(const Checkpoint& ck, const std::string& name, Tensor<S>& t) {
        const CheckpointEntry* e = find_entry(ck, name);
        if (!e) throw format_error("checkpoint is missing '" + name + "'");
        if (e->dims != t.dims) {
            throw format_error("checkpoint '" + name + "' has shape " + shape_str(e->dims) +
                               ", expected " + shape_str(t.dims));
        }
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<S>(e->data[i]);
    }

    Var<S> conv_block(const Var<S>& x, const std::string& name, int stride, int padding) {
        return conv1d(x, param(name).var, param(name + "_bias").var, stride, padding);
    }

    std::vector<Param<S>> params_;
};

template <typename S>
struct VqLossParts {
    Var<S> total, l_r, l_e, l_c, l_v;
};

// Four-term tokenizer loss. In EMA mode the embedding term is reported but
// carries no gradient (the codebook learns through the EMA statistics).
template <typename S>
VqLossParts<S> vq_loss(const Var<S>& motion, const Var<S>& reconstruction, const Var<S>& latents,
                       const QuantizeResult<S>& quantized, const Codebook<S>& codebook,
                       const TokenizerConfig& config) {
    require_same_dims(motion.val(), reconstruction.val(), "vq_loss");
    require_same_dims(latents.val(), quantized.quantized, "vq_loss");
    VqLossParts<S> parts;
    parts.l_r = mse(reconstruction, motion);
    parts.l_v = scale(mse(diff_rows(reconstruction), diff_rows(motion)),
                      static_cast<S>(config.lambda_velocity));
    parts.l_c = scale(mse(latents, constant(Tensor<S>(quantized.quantized))),
                      static_cast<S>(config.beta_commit));
    if (config.ema) {
        // logging only: mean ||sg[z_hat] - z||^2 with no graph attachment
        Var<S> detached = constant(Tensor<S>(latents.val()));
        Var<S> entries_rows = constant(Tensor<S>(quantized.quantized));
        parts.l_e = mse(detached, entries_rows);
        parts.total = add(add(parts.l_r, parts.l_v), parts.l_c);
    } else {
        Var<S> entries_rows =
            gather_rows(const_cast<Codebook<S>&>(codebook).entries.var, quantized.indices);
        parts.l_e = mse(constant(Tensor<S>(latents.val())), entries_rows);
        parts.total = add(add(add(parts.l_r, parts.l_v), parts.l_c), parts.l_e);
    }
    return parts;
}

// EMA codebook maintenance with Laplace-smoothed counts.
template <typename S>
void ema_update(Codebook<S>& codebook, const Tensor<S>& latents, const std::vector<int>& indices) {
    const int k = codebook.size(), d = codebook.dim();
    const int m = latents.dim(0);
    if (static_cast<int>(indices.size()) != m) throw shape_error("ema_update: index count mismatch");
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    std::vector<double> sums(static_cast<std::size_t>(k) * d, 0.0);
    for (int i = 0; i < m; ++i) {
        const int e = indices[static_cast<std::size_t>(i)];
        counts[static_cast<std::size_t>(e)] += 1.0;
        for (int j = 0; j < d; ++j)
            sums[static_cast<std::size_t>(e) * d + j] += static_cast<double>(latents.at(i, j));
    }
    const double decay = codebook.decay;
    double total = 0;
    for (int e = 0; e < k; ++e) {
        const double c = decay * static_cast<double>(codebook.ema_counts.at(e)) +
                         (1.0 - decay) * counts[static_cast<std::size_t>(e)];
        codebook.ema_counts.at(e) = static_cast<S>(c);
        total += c;
        for (int j = 0; j < d; ++j) {
            codebook.ema_sums.at(e, j) =
                static_cast<S>(decay * static_cast<double>(codebook.ema_sums.at(e, j)) +
                               (1.0 - decay) * sums[static_cast<std::size_t>(e) * d + j]);
        }
    }
    const double eps = codebook.usage_epsilon;
    auto& entries = codebook.entries.value();
    for (int e = 0; e < k; ++e) {
        const double smoothed =
            (static_cast<double>(codebook.ema_counts.at(e)) + eps) / (total + k * eps) * total;
        for (int j = 0; j < d; ++j)
            entries.at(e, j) = static_cast<S>(static_cast<double>(codebook.ema_sums.at(e, j)) / smoothed);
    }
}

// Replace every entry with ema_counts below the threshold by a batch latent.
template <typename S>
int codebook_reset(Codebook<S>& codebook, const Tensor<S>& batch_latents, double usage_threshold,
                   Rng& rng) {
    if (batch_latents.dim(0) < 1) throw domain_error("codebook_reset: empty batch");
    const int k = codebook.size(), d = codebook.dim();
    int resets = 0;
    for (int e = 0; e < k; ++e) {
        if (static_cast<double>(codebook.ema_counts.at(e)) < usage_threshold) {
            const int pick = static_cast<int>(rng.uniform_int(
                static_cast<std::uint64_t>(batch_latents.dim(0))));
            for (int j = 0; j < d; ++j) {
                const S v = batch_latents.at(pick, j);
                codebook.entries.value().at(e, j) = v;
                codebook.ema_sums.at(e, j) = v;
            }
            codebook.ema_counts.at(e) = S(1);
            ++resets;
        }
    }
    return resets;
}

struct TokenizerEpochStats {
    int epoch = 0;
    double total = 0, l_r = 0, l_e = 0, l_c = 0, l_v = 0;
    double utilization = 0;
    int resets = 0;
};

// Deterministic single-threaded training loop; the loss curve is a pure
// function of (dataset, config, epochs, seed).
template <typename S>
std::vector<TokenizerEpochStats> train_tokenizer(MotionTokenizer<S>& tokenizer,
                                                 const std::vector<MotionSequence>& dataset,
                                                 int epochs, std::uint64_t seed,
                                                 int step_offset = 0) {
    if (dataset.empty()) throw train_error("tokenizer training needs a nonempty dataset");
    const TokenizerConfig& cfg = tokenizer.config;

    // Feature normalization from the training set (kept when resuming).
    if (step_offset == 0) {
        std::vector<double> mean(static_cast<std::size_t>(cfg.input_dim), 0.0);
        std::vector<double> sq(static_cast<std::size_t>(cfg.input_dim), 0.0);
        std::int64_t rows = 0;
        for (const auto& m : dataset) {
            for (int i = 0; i < m.dim(0); ++i) {
                for (int j = 0; j < cfg.input_dim; ++j) {
                    mean[static_cast<std::size_t>(j)] += m.at(i, j);
                    sq[static_cast<std::size_t>(j)] += static_cast<double>(m.at(i, j)) * m.at(i, j);
                }
            }
            rows += m.dim(0);
        }
        for (int j = 0; j < cfg.input_dim; ++j) {
            const double mu = mean[static_cast<std::size_t>(j)] / rows;
            const double var = sq[static_cast<std::size_t>(j)] / rows - mu * mu;
            tokenizer.feature_mean.at(j) = static_cast<S>(mu);
            tokenizer.feature_std.at(j) = static_cast<S>(std::sqrt(std::max(var, 1e-8)));
        }
    }

    typename AdamW<S>::Options opts;
    opts.lr = static_cast<S>(cfg.lr);
    opts.weight_decay = static_cast<S>(cfg.weight_decay);
    AdamW<S> optimizer(opts);
    auto params = tokenizer.params();

    std::vector<TokenizerEpochStats> curve;
    int global_step = step_offset;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng order_rng = Rng::derive(seed, 0xe90c + static_cast<std::uint64_t>(global_step));
        std::vector<int> order(dataset.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        order_rng.shuffle(order);

        TokenizerEpochStats stats;
        stats.epoch = epoch;
        std::set<int> used;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            zero_grads(params);
            Var<S> batch_total, batch_r, batch_e, batch_c, batch_v;
            Tensor<S> all_latents;
            std::vector<int> all_indices;
            std::vector<Tensor<S>> latent_blocks;
            for (std::size_t bi = start; bi < end; ++bi) {
                const MotionSequence& motion = dataset[static_cast<std::size_t>(order[bi])];
                Var<S> x = constant(tokenizer.normalize(motion));
                Var<S> latents = tokenizer.encode_graph(x);
                auto qr = quantize(tokenizer.codebook, latents.val());
                for (int q : qr.indices) used.insert(q);
                Var<S> st = straight_through(latents, qr.quantized);
                Var<S> recon = tokenizer.decode_graph(st);
                auto parts = vq_loss(x, recon, latents, qr, tokenizer.codebook, cfg);
                batch_total = batch_total.defined() ? add(batch_total, parts.total) : parts.total;
                batch_r = batch_r.defined() ? add(batch_r, parts.l_r) : parts.l_r;
                batch_e = batch_e.defined() ? add(batch_e, parts.l_e) : parts.l_e;
                batch_c = batch_c.defined() ? add(batch_c, parts.l_c) : parts.l_c;
                batch_v = batch_v.defined() ? add(batch_v, parts.l_v) : parts.l_v;
                latent_blocks.push_back(latents.val());
                all_indices.insert(all_indices.end(), qr.indices.begin(), qr.indices.end());
            }
            const S inv = static_cast<S>(1.0 / static_cast<double>(end - start));
            Var<S> loss = scale(batch_total, inv);
            const double loss_v = static_cast<double>(loss.val().data[0]);
            if (!std::isfinite(loss_v)) {
                throw train_error("NaN tokenizer loss at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batches));
            }
            backward(loss);
            optimizer.step(params);

            if (cfg.ema) {
                int rows = 0;
                for (const auto& b : latent_blocks) rows += b.dim(0);
                all_latents = Tensor<S>({rows, cfg.codebook_d});
                int at = 0;
                for (const auto& b : latent_blocks) {
                    std::copy(b.data.begin(), b.data.end(), all_latents.row(at));
                    at += b.dim(0);
                }
                ema_update(tokenizer.codebook, all_latents, all_indices);
                if (cfg.reset_enabled) {
                    Rng reset_rng = Rng::derive(seed, 0x5e7 + static_cast<std::uint64_t>(global_step));
                    stats.resets += codebook_reset(tokenizer.codebook, all_latents,
                                                   cfg.reset_threshold, reset_rng);
                }
            }

            stats.total += loss_v;
            stats.l_r += static_cast<double>(batch_r.val().data[0]) * inv;
            stats.l_e += static_cast<double>(batch_e.val().data[0]) * inv;
            stats.l_c += static_cast<double>(batch_c.val().data[0]) * inv;
            stats.l_v += static_cast<double>(batch_v.val().data[0]) * inv;
            ++batches;
            ++global_step;
        }
        stats.total /= batches;
        stats.l_r /= batches;
        stats.l_e /= batches;
        stats.l_c /= batches;
        stats.l_v /= batches;
        stats.utilization = static_cast<double>(used.size()) / cfg.codebook_k;
        log_info("tokenizer epoch " + std::to_string(epoch) + " loss " + std::to_string(stats.total) +
                 " recon " + std::to_string(stats.l_r) + " util " + std::to_string(stats.utilization));
        curve.push_back(stats);
    }
    return curve;
}

// Fraction of codebook entries assigned at least once on the probe set.
template <typename S>
double codebook_utilization(MotionTokenizer<S>& tokenizer, const std::vector<MotionSequence>& probe) {
    std::set<int> used;
    for (const auto& m : probe) {
        for (int idx : tokenizer.encode_indices(m)) used.insert(idx);
    }
    return static_cast<double>(used.size()) / tokenizer.config.codebook_k;
}

}  // namespace hoi
