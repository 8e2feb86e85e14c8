#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hoi/geometry.hpp"
#include "hoi/motion.hpp"
#include "hoi/tasks.hpp"
#include "hoi/tensor.hpp"
#include "hoi/vqvae.hpp"

namespace hoi {

// ---------------------------------------------------------------------------
// contact metrics (appendix: C_prec, C_rec, C_acc, c%)
// ---------------------------------------------------------------------------

constexpr double kDefaultContactThreshold = 0.05;  // meters

struct ContactStats {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    double threshold = kDefaultContactThreshold;

    long total() const { return tp + fp + fn + tn; }
};

struct ContactRates {
    double c_prec = 0, c_rec = 0, c_acc = 0, contact_pct = 0;
    bool degenerate = false;  // a rate had a zero denominator and reports 0
};

// Per-frame contact flags: min distance from either hand joint to that
// frame's object points below the threshold.
std::vector<char> contact_flags(const Tensor<double>& hands, const Tensor<double>& points_world,
                                double threshold);

ContactStats contact_stats_from_flags(const std::vector<char>& pred,
                                      const std::vector<char>& gt, double threshold);

// pred/gt hands: L x 2 x 3; object_points_world: L x N x 3 (shared series).
ContactStats contact_metrics(const Tensor<double>& pred_hands, const Tensor<double>& gt_hands,
                             const Tensor<double>& object_points_world, double threshold);

ContactRates contact_rates(const ContactStats& stats);

// ---------------------------------------------------------------------------
// position errors
// ---------------------------------------------------------------------------

struct JointErrors {
    double hand_jpe_cm = 0;
    double mpjpe_cm = 0;
};

// pred/gt: L x J x 3 joint positions in meters; errors reported in cm.
JointErrors joint_errors(const Tensor<double>& pred, const Tensor<double>& gt,
                         const std::vector<int>& hand_indices);

// Mean per-frame Frobenius norm between correspondingly posed clouds; the
// optional vector receives the full per-frame series.
double e_v2v(const MotionSequence& pred_pose_seq, const MotionSequence& gt_pose_seq,
             const ObjectPointCloud& points, std::vector<double>* per_frame = nullptr);

// Mean Euclidean error of the object centers (translation columns only).
double e_c(const MotionSequence& pred_pose_seq, const MotionSequence& gt_pose_seq,
           std::vector<double>* per_frame = nullptr);

// Bidirectional mean nearest-neighbor distance, each direction normalized by
// its own set size.
double chamfer(const Tensor<double>& x, const Tensor<double>& y);

// ---------------------------------------------------------------------------
// distribution metrics
// ---------------------------------------------------------------------------

// Gaussian Frechet distance with +1e-6 I covariance regularization; the
// matrix square root is taken via symmetric eigendecomposition of the
// symmetrized product.
double frechet_feature_distance(const Tensor<double>& features_a, const Tensor<double>& features_b);

// Mean Euclidean distance over n_pairs seeded disjoint random pairs.
double diversity(const Tensor<double>& features, int n_pairs, std::uint64_t seed);

// Symmetric Jacobi eigendecomposition; exposed for the metric oracle tests.
void jacobi_eigen(const Tensor<double>& sym, Tensor<double>& eigvals, Tensor<double>& eigvecs);

// ---------------------------------------------------------------------------
// conversions from domain types
// ---------------------------------------------------------------------------

Tensor<double> hands_series(const HumanMotion& human);                 // L x 2 x 3
Tensor<double> joints_series(const HumanMotion& human);                // L x J x 3
Tensor<double> object_points_series(const MotionSequence& object_pose,
                                    const ObjectPointCloud& cloud);    // L x N x 3

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct MetricReport {
    std::optional<double> c_prec, c_rec, c_acc, contact_pct;
    std::optional<double> hand_jpe_cm, mpjpe_cm;
    std::optional<double> e_v2v, e_c, e_ch;
    std::optional<double> fid, diversity;
    std::optional<double> r_precision_top1, r_precision_top2, r_precision_top3;
    std::optional<double> gt_contact_pct;  // companion number for the c% ambiguity
    bool degenerate = false;
    long raw_tp = -1, raw_fp = -1, raw_fn = -1, raw_tn = -1;

    std::string to_json() const;
    std::string to_table() const;
};

// ---------------------------------------------------------------------------
// surrogate retrieval precision
// ---------------------------------------------------------------------------

struct RPrecisionResult {
    double top1 = 0, top2 = 0, top3 = 0;
    int evaluated = 0;
};

// Ranks the true caption among pool_size-1 seeded distractor captions by the
// LM negative log-likelihood of the sample's motion tokens under the t2hoi
// framing; reports top-k hit rates.
template <typename S>
RPrecisionResult r_precision_surrogate(TransformerModel<S>& model,
                                       const std::vector<TokenizedSample>& samples,
                                       const UnifiedVocab& vocab, int pool_size,
                                       std::uint64_t seed) {
    if (pool_size < 2) throw config_error("r-precision pool must hold at least 2 captions");
    std::vector<std::string> caption_pool;
    for (const auto& s : samples) {
        if (std::find(caption_pool.begin(), caption_pool.end(), s.caption) == caption_pool.end()) {
            caption_pool.push_back(s.caption);
        }
    }
    if (static_cast<int>(caption_pool.size()) < pool_size) {
        throw config_error("caption pool of " + std::to_string(caption_pool.size()) +
                           " distinct captions is smaller than pool size " +
                           std::to_string(pool_size));
    }
    const TaskSpec& task = task_by_name("t2hoi");
    RPrecisionResult res;
    for (std::size_t si = 0; si < samples.size(); ++si) {
        const TokenizedSample& s = samples[si];
        Rng rng = Rng::derive(seed, 0x9bec + si);
        std::vector<std::string> candidates{s.caption};
        std::vector<std::string> others;
        for (const auto& c : caption_pool) {
            if (c != s.caption) others.push_back(c);
        }
        rng.shuffle(others);
        for (int i = 0; i < pool_size - 1; ++i) candidates.push_back(others[static_cast<std::size_t>(i)]);
        rng.shuffle(candidates);

        int true_pos = -1;
        std::vector<std::pair<double, int>> scored;
        for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
            TokenizedSample probe = s;
            probe.caption = candidates[ci];
            probe.caption_ids = vocab.encode_caption(candidates[ci]);
            const double nll = eval_task_loss(model, {probe}, task, vocab);
            scored.push_back({nll, static_cast<int>(ci)});
            if (candidates[ci] == s.caption && true_pos < 0) true_pos = static_cast<int>(ci);
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](auto& a, auto& b) { return a.first < b.first; });
        int rank = 0;
        for (std::size_t r = 0; r < scored.size(); ++r) {
            if (scored[r].second == true_pos) {
                rank = static_cast<int>(r);
                break;
            }
        }
        if (rank < 1) res.top1 += 1;
        if (rank < 2) res.top2 += 1;
        if (rank < 3) res.top3 += 1;
        ++res.evaluated;
    }
    if (res.evaluated > 0) {
        res.top1 /= res.evaluated;
        res.top2 /= res.evaluated;
        res.top3 /= res.evaluated;
    }
    return res;
}

// Sequence-level feature for FID/diversity: mean-pooled pre-quantization
// encoder latents of the (trained) human-motion tokenizer.
template <typename S>
std::vector<double> motion_feature(MotionTokenizer<S>& tok, const MotionSequence& motion) {
    const Tensor<S> latents = tok.encode(motion);
    std::vector<double> f(static_cast<std::size_t>(latents.dim(1)), 0.0);
    for (int i = 0; i < latents.dim(0); ++i) {
        for (int j = 0; j < latents.dim(1); ++j)
            f[static_cast<std::size_t>(j)] += static_cast<double>(latents.at(i, j));
    }
    for (auto& v : f) v /= latents.dim(0);
    return f;
}

template <typename S>
Tensor<double> feature_matrix(MotionTokenizer<S>& tok, const std::vector<MotionSequence>& motions) {
    if (motions.empty()) throw domain_error("feature_matrix: empty motion set");
    const int d = tok.config.codebook_d;
    Tensor<double> out({static_cast<int>(motions.size()), d});
    for (std::size_t i = 0; i < motions.size(); ++i) {
        const auto f = motion_feature(tok, motions[i]);
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = f[static_cast<std::size_t>(j)];
    }
    return out;
}

}  // namespace hoi
