#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hoi/rng.hpp"
#include "hoi/synthetic.hpp"
#include "hoi/vqvae.hpp"

using namespace hoi;

namespace {

TokenizerConfig small_config(int input_dim = 6) {
    TokenizerConfig cfg;
    cfg.input_dim = input_dim;
    cfg.widths = {16, 24};
    cfg.downsample = 2;
    cfg.codebook_k = 16;
    cfg.codebook_d = 8;
    return cfg;
}

MotionSequence random_motion(int frames, int dim, std::uint64_t seed) {
    Rng rng(seed);
    MotionSequence m({frames, dim});
    for (auto& v : m.data) v = static_cast<float>(rng.gaussian());
    return m;
}

// Independent nearest-neighbor scan (different code path from quantize).
std::vector<int> brute_force_nn(const Tensor<float>& entries, const Tensor<float>& latents) {
    std::vector<int> out;
    for (int i = 0; i < latents.dim(0); ++i) {
        std::vector<std::pair<double, int>> dists;
        for (int e = 0; e < entries.dim(0); ++e) {
            double acc = 0;
            for (int j = 0; j < entries.dim(1); ++j) {
                const double d = double(latents.at(i, j)) - double(entries.at(e, j));
                acc += d * d;
            }
            dists.push_back({acc, e});
        }
        std::stable_sort(dists.begin(), dists.end(),
                         [](auto& a, auto& b) { return a.first < b.first; });
        out.push_back(dists.front().second);
    }
    return out;
}

}  // namespace

TEST_CASE("encode: downsampling, zero weights, determinism") {
    MotionTokenizer<float> tok(small_config(), 7);
    auto m = random_motion(16, 6, 1);
    auto latents = tok.encode(m);
    CHECK(latents.dims == Shape{8, 8});  // L=16, l=2 -> m=8

    auto latents2 = tok.encode(m);
    CHECK(latents.data == latents2.data);

    // zero-weight encoder produces zero latents
    MotionTokenizer<float> zero_tok(small_config(), 7);
    for (auto* p : zero_tok.params()) {
        if (p->name.rfind("enc.", 0) == 0) {
            std::fill(p->value().data.begin(), p->value().data.end(), 0.0f);
        }
    }
    auto z = zero_tok.encode(m);
    for (float v : z.data) CHECK(v == 0.0f);

    // too-short sequence
    CHECK_THROWS_AS(tok.encode(random_motion(1, 6, 2)), Error);
}

TEST_CASE("quantize: exact match, tie-break, brute-force oracle") {
    MotionTokenizer<float> tok(small_config(), 3);
    const int d = tok.config.codebook_d;

    Tensor<float> latents({1, d});
    for (int j = 0; j < d; ++j) latents.at(0, j) = tok.codebook.entries.value().at(7, j);
    auto qr = quantize(tok.codebook, latents);
    CHECK(qr.indices[0] == 7);
    for (int j = 0; j < d; ++j) CHECK(qr.quantized.at(0, j) == latents.at(0, j));

    // exactly equidistant between entries 2 and 5 -> lowest index wins
    auto& entries = tok.codebook.entries.value();
    for (int j = 0; j < d; ++j) {
        entries.at(2, j) = (j == 0) ? 1.0f : 0.0f;
        entries.at(5, j) = (j == 0) ? -1.0f : 0.0f;
    }
    Tensor<float> mid({1, d});  // origin: distance 1 to both, farther from the rest?
    // Push all other entries far away so only 2 and 5 compete.
    for (int e = 0; e < tok.config.codebook_k; ++e) {
        if (e == 2 || e == 5) continue;
        for (int j = 0; j < d; ++j) entries.at(e, j) = 50.0f + e;
    }
    auto tie = quantize(tok.codebook, mid);
    CHECK(tie.indices[0] == 2);

    // 100 random latents against the independent scan
    MotionTokenizer<float> tok2(small_config(), 11);
    Rng rng(5);
    Tensor<float> batch({100, d});
    for (auto& v : batch.data) v = static_cast<float>(rng.gaussian() * 0.3);
    auto got = quantize(tok2.codebook, batch);
    auto expect = brute_force_nn(tok2.codebook.entries.value(), batch);
    CHECK(got.indices == expect);

    Tensor<float> bad({1, d});
    bad.at(0, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(quantize(tok.codebook, bad), Error);
}

TEST_CASE("decode: length formula, purity, index range") {
    MotionTokenizer<float> tok(small_config(), 9);
    Tensor<float> q({8, 8});
    Rng rng(2);
    for (auto& v : q.data) v = static_cast<float>(rng.gaussian());
    auto out = tok.decode(q);
    CHECK(out.dims == Shape{16, 6});  // m=8, l=2 -> L=16
    auto out2 = tok.decode(q);
    CHECK(out.data == out2.data);

    CHECK_THROWS_AS(tok.decode_indices({0, 99}), Error);
    CHECK_THROWS_AS(tok.decode_indices({}), Error);
}

TEST_CASE("encode/decode round trip preserves dims for L divisible by l") {
    MotionTokenizer<float> tok(small_config(), 13);
    for (int frames : {8, 16, 30}) {
        auto m = random_motion(frames, 6, static_cast<std::uint64_t>(frames));
        auto recon = tok.reconstruct(m);
        CHECK(recon.dims == m.dims);
    }
    // odd length: pad policy trims back to the original length
    auto m9 = random_motion(9, 6, 99);
    CHECK(tok.reconstruct(m9).dims == Shape{9, 6});
}

TEST_CASE("vq_loss: zero case, constant-motion velocity, hand arithmetic") {
    TokenizerConfig cfg = small_config(1);
    cfg.lambda_velocity = 3.0;
    Codebook<float> cb;
    cb.entries = Param<float>(Tensor<float>({4, 1}), "codebook.entries");

    // perfect reconstruction, z_hat == z -> all terms zero
    Tensor<float> m({3, 1}, {1, 2, 3});
    Tensor<float> lat({2, 1}, {0, 0});
    QuantizeResult<float> qr{Tensor<float>({2, 1}, {0, 0}), {0, 0}};
    auto parts = vq_loss(constant(Tensor<float>(m)), constant(Tensor<float>(m)),
                         constant(Tensor<float>(lat)), qr, cb, cfg);
    CHECK(parts.total.val().data[0] == 0.0f);
    CHECK(parts.l_r.val().data[0] == 0.0f);
    CHECK(parts.l_e.val().data[0] == 0.0f);
    CHECK(parts.l_c.val().data[0] == 0.0f);
    CHECK(parts.l_v.val().data[0] == 0.0f);

    // constant motion and constant-offset reconstruction -> L_v = 0
    Tensor<float> cm({4, 1}, {2, 2, 2, 2});
    Tensor<float> cr({4, 1}, {5, 5, 5, 5});
    auto parts2 = vq_loss(constant(Tensor<float>(cm)), constant(Tensor<float>(cr)),
                          constant(Tensor<float>(lat)), qr, cb, cfg);
    CHECK(parts2.l_v.val().data[0] == 0.0f);
    CHECK(parts2.l_r.val().data[0] == doctest::Approx(9.0f));

    // hand case: M=[[0],[2]], M_hat=[[0],[0]] -> L_r = 2, L_v = lambda * 4
    Tensor<float> hm({2, 1}, {0, 2});
    Tensor<float> hr({2, 1}, {0, 0});
    auto parts3 = vq_loss(constant(Tensor<float>(hm)), constant(Tensor<float>(hr)),
                          constant(Tensor<float>(lat)), qr, cb, cfg);
    CHECK(parts3.l_r.val().data[0] == doctest::Approx(2.0f));
    CHECK(parts3.l_v.val().data[0] == doctest::Approx(3.0f * 4.0f));
}

TEST_CASE("ema_update: empty assignment, decay-zero limit, recurrence oracle") {
    auto make_cb = [](double decay, double eps = 1e-5) {
        Codebook<double> cb;
        Tensor<double> entries({3, 2}, {1, 1, 2, 2, 3, 3});
        cb.entries = Param<double>(std::move(entries), "codebook.entries");
        cb.ema_counts = Tensor<double>::full({3}, 1.0);
        cb.ema_sums = cb.entries.value();
        cb.decay = decay;
        cb.usage_epsilon = eps;
        return cb;
    };

    // nothing assigned to entry 2 -> its count only decays
    auto cb = make_cb(0.9);
    Tensor<double> lat({2, 2}, {1, 1, 2, 2});
    ema_update(cb, lat, {0, 1});
    CHECK(cb.ema_counts.at(2) == doctest::Approx(0.9));
    CHECK(cb.ema_counts.at(0) == doctest::Approx(0.9 + 0.1));

    // decay = 0: every assigned entry becomes the assigned latent value
    // (usage smoothing made negligible so the limit is visible at 1e-6)
    auto cb0 = make_cb(0.0, 1e-12);
    Tensor<double> same({4, 2}, {7, -1, 7, -1, 7, -1, 7, -1});
    ema_update(cb0, same, {0, 0, 1, 1});
    for (int e = 0; e < 2; ++e) {
        CHECK(std::abs(cb0.entries.value().at(e, 0) - 7.0) < 1e-6);
        CHECK(std::abs(cb0.entries.value().at(e, 1) + 1.0) < 1e-6);
    }

    // ten steps against an independently coded recurrence
    auto cb10 = make_cb(0.85);
    double counts[3] = {1, 1, 1};
    double sums[3][2] = {{1, 1}, {2, 2}, {3, 3}};
    Rng rng(17);
    for (int step = 0; step < 10; ++step) {
        Tensor<double> batch({5, 2});
        std::vector<int> idx(5);
        for (int i = 0; i < 5; ++i) {
            idx[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(3));
            batch.at(i, 0) = rng.gaussian();
            batch.at(i, 1) = rng.gaussian();
        }
        ema_update(cb10, batch, idx);
        double bc[3] = {0, 0, 0};
        double bs[3][2] = {{0, 0}, {0, 0}, {0, 0}};
        for (int i = 0; i < 5; ++i) {
            bc[idx[static_cast<std::size_t>(i)]] += 1;
            bs[idx[static_cast<std::size_t>(i)]][0] += batch.at(i, 0);
            bs[idx[static_cast<std::size_t>(i)]][1] += batch.at(i, 1);
        }
        for (int e = 0; e < 3; ++e) {
            counts[e] = 0.85 * counts[e] + 0.15 * bc[e];
            sums[e][0] = 0.85 * sums[e][0] + 0.15 * bs[e][0];
            sums[e][1] = 0.85 * sums[e][1] + 0.15 * bs[e][1];
        }
        const double total = counts[0] + counts[1] + counts[2];
        for (int e = 0; e < 3; ++e) {
            const double smoothed = (counts[e] + 1e-5) / (total + 3e-5) * total;
            CHECK(std::abs(cb10.entries.value().at(e, 0) - sums[e][0] / smoothed) < 1e-6);
            CHECK(std::abs(cb10.entries.value().at(e, 1) - sums[e][1] / smoothed) < 1e-6);
            CHECK(std::abs(cb10.ema_counts.at(e) - counts[e]) < 1e-9);
        }
    }
}

TEST_CASE("codebook_reset: no-op case and total reset") {
    Codebook<float> cb;
    cb.entries = Param<float>(Tensor<float>({4, 2}, {1, 1, 2, 2, 3, 3, 4, 4}), "codebook.entries");
    cb.ema_counts = Tensor<float>::full({4}, 5.0f);
    cb.ema_sums = cb.entries.value();
    Tensor<float> batch({3, 2}, {9, 9, 8, 8, 7, 7});

    Rng rng(1);
    const auto before = cb.entries.value().data;
    CHECK(codebook_reset(cb, batch, 1.0, rng) == 0);
    CHECK(cb.entries.value().data == before);

    Rng rng2(1);
    const int resets = codebook_reset(cb, batch, std::numeric_limits<double>::infinity(), rng2);
    CHECK(resets == 4);
    for (int e = 0; e < 4; ++e) {
        CHECK(cb.ema_counts.at(e) == 1.0f);
        bool matches_batch = false;
        for (int b = 0; b < 3; ++b) {
            if (cb.entries.value().at(e, 0) == batch.at(b, 0) &&
                cb.entries.value().at(e, 1) == batch.at(b, 1)) {
                matches_batch = true;
            }
        }
        CHECK(matches_batch);
    }
}

TEST_CASE("train_tokenizer: no-op epochs, bit-reproducible curve") {
    std::vector<MotionSequence> data;
    for (int i = 0; i < 8; ++i) data.push_back(random_motion(12, 6, static_cast<std::uint64_t>(i)));

    MotionTokenizer<float> tok(small_config(), 21);
    const auto snapshot = tok.param("enc.conv_in").value().data;
    auto curve0 = train_tokenizer(tok, data, 0, 5);
    CHECK(curve0.empty());
    CHECK(tok.param("enc.conv_in").value().data == snapshot);

    MotionTokenizer<float> a(small_config(), 21), b(small_config(), 21);
    auto ca = train_tokenizer(a, data, 3, 5);
    auto cb = train_tokenizer(b, data, 3, 5);
    REQUIRE(ca.size() == cb.size());
    for (std::size_t i = 0; i < ca.size(); ++i) {
        CHECK(ca[i].total == cb[i].total);
        CHECK(ca[i].l_r == cb[i].l_r);
        CHECK(ca[i].utilization == cb[i].utilization);
    }
    CHECK(a.param("dec.conv_out").value().data == b.param("dec.conv_out").value().data);
    CHECK(codebook_utilization(a, data) == codebook_utilization(b, data));
}

TEST_CASE("straight-through contract on a frozen toy net") {
    TokenizerConfig cfg = small_config();
    MotionTokenizer<double> tok(cfg, 33);
    auto m = random_motion(8, 6, 50);

    auto encoder_grads = [&](bool use_st) {
        for (auto* p : tok.params()) p->var.zero_grad();
        Var<double> x = constant(tok.normalize(m));
        Var<double> latents = tok.encode_graph(x);
        auto qr = quantize(tok.codebook, latents.val());
        Var<double> quantized;
        if (use_st) {
            quantized = straight_through(latents, qr.quantized);
        } else {
            // identity plus constant offset: z + sg[q - z]
            Tensor<double> offset = qr.quantized;
            for (std::size_t i = 0; i < offset.data.size(); ++i)
                offset.data[i] -= latents.val().data[i];
            quantized = add(latents, constant(std::move(offset)));
        }
        Var<double> recon = tok.decode_graph(quantized);
        Var<double> loss = mse(recon, x);
        backward(loss);
        std::vector<std::vector<double>> grads;
        for (auto* p : tok.params()) {
            if (p->name.rfind("enc.", 0) == 0) grads.push_back(p->grad().data);
        }
        return grads;
    };

    auto g_st = encoder_grads(true);
    auto g_offset = encoder_grads(false);
    REQUIRE(g_st.size() == g_offset.size());
    REQUIRE(!g_st.empty());
    for (std::size_t t = 0; t < g_st.size(); ++t) {
        REQUIRE(g_st[t].size() == g_offset[t].size());
        for (std::size_t i = 0; i < g_st[t].size(); ++i) {
            CHECK(g_st[t][i] == doctest::Approx(g_offset[t][i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("training reduces reconstruction loss on synthetic motion") {
    auto samples = generate_synthetic_dataset(3, 24, 16, default_templates());
    std::vector<MotionSequence> data;
    for (const auto& s : samples) data.push_back(s.object.frames);

    TokenizerConfig cfg = small_config(6);
    cfg.lr = 1e-3;
    cfg.batch = 8;
    MotionTokenizer<float> tok(cfg, 77);
    auto curve = train_tokenizer(tok, data, 12, 9);
    REQUIRE(curve.size() == 12);
    CHECK(curve.back().l_r < curve.front().l_r * 0.8);
    for (const auto& row : curve) {
        CHECK(row.utilization >= 0.0);
        CHECK(row.utilization <= 1.0);
    }
}
