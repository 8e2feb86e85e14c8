#include "hoi/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "hoi/rng.hpp"

namespace hoi {

std::vector<char> contact_flags(const Tensor<double>& hands, const Tensor<double>& points_world,
                                double threshold) {
    if (hands.rank() != 3 || hands.dim(1) != 2 || hands.dim(2) != 3) {
        throw shape_error("contact_flags: hands must be L x 2 x 3, got " + shape_str(hands.dims));
    }
    if (points_world.rank() != 3 || points_world.dim(2) != 3 ||
        points_world.dim(0) != hands.dim(0)) {
        throw shape_error("contact_flags: points must be L x N x 3 with matching L, got " +
                          shape_str(points_world.dims));
    }
    const int frames = hands.dim(0), n = points_world.dim(1);
    std::vector<char> flags(static_cast<std::size_t>(frames), 0);
    const double thr2 = threshold * threshold;
    for (int f = 0; f < frames; ++f) {
        bool contact = false;
        for (int h = 0; h < 2 && !contact; ++h) {
            const double hx = hands.at(f, h, 0), hy = hands.at(f, h, 1), hz = hands.at(f, h, 2);
            for (int i = 0; i < n; ++i) {
                const double dx = points_world.at(f, i, 0) - hx;
                const double dy = points_world.at(f, i, 1) - hy;
                const double dz = points_world.at(f, i, 2) - hz;
                if (dx * dx + dy * dy + dz * dz < thr2) {
                    contact = true;
                    break;
                }
            }
        }
        flags[static_cast<std::size_t>(f)] = contact ? 1 : 0;
    }
    return flags;
}

ContactStats contact_stats_from_flags(const std::vector<char>& pred, const std::vector<char>& gt,
                                      double threshold) {
    if (pred.size() != gt.size()) {
        throw shape_error("contact stats: " + std::to_string(pred.size()) + " predicted frames vs " +
                          std::to_string(gt.size()) + " ground-truth frames");
    }
    ContactStats s;
    s.threshold = threshold;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && gt[i]) ++s.tp;
        else if (pred[i] && !gt[i]) ++s.fp;
        else if (!pred[i] && gt[i]) ++s.fn;
        else ++s.tn;
    }
    return s;
}

ContactStats contact_metrics(const Tensor<double>& pred_hands, const Tensor<double>& gt_hands,
                             const Tensor<double>& object_points_world, double threshold) {
    if (pred_hands.dims != gt_hands.dims) {
        throw shape_error("contact_metrics: hand series shapes differ: " +
                          shape_str(pred_hands.dims) + " vs " + shape_str(gt_hands.dims));
    }
    const auto pred = contact_flags(pred_hands, object_points_world, threshold);
    const auto gt = contact_flags(gt_hands, object_points_world, threshold);
    return contact_stats_from_flags(pred, gt, threshold);
}

ContactRates contact_rates(const ContactStats& s) {
    ContactRates r;
    const long total = s.total();
    if (s.tp + s.fp > 0) {
        r.c_prec = static_cast<double>(s.tp) / (s.tp + s.fp);
    } else {
        r.degenerate = true;
    }
    if (s.tp + s.fn > 0) {
        r.c_rec = static_cast<double>(s.tp) / (s.tp + s.fn);
    } else {
        r.degenerate = true;
    }
    if (total > 0) {
        r.c_acc = static_cast<double>(s.tp + s.tn) / total;
        r.contact_pct = static_cast<double>(s.tp + s.fp) / total;
    } else {
        r.degenerate = true;
    }
    return r;
}

JointErrors joint_errors(const Tensor<double>& pred, const Tensor<double>& gt,
                         const std::vector<int>& hand_indices) {
    if (pred.dims != gt.dims || pred.rank() != 3 || pred.dim(2) != 3) {
        throw shape_error("joint_errors: want matching L x J x 3, got " + shape_str(pred.dims) +
                          " vs " + shape_str(gt.dims));
    }
    const int frames = pred.dim(0), joints = pred.dim(1);
    double all = 0, hand = 0;
    long hand_count = 0;
    for (int f = 0; f < frames; ++f) {
        for (int j = 0; j < joints; ++j) {
            double d2 = 0;
            for (int c = 0; c < 3; ++c) {
                const double d = pred.at(f, j, c) - gt.at(f, j, c);
                d2 += d * d;
            }
            const double d = std::sqrt(d2);
            all += d;
            for (int h : hand_indices) {
                if (h == j) {
                    hand += d;
                    ++hand_count;
                }
            }
        }
    }
    JointErrors e;
    e.mpjpe_cm = all / (static_cast<double>(frames) * joints) * 100.0;
    e.hand_jpe_cm = hand_count > 0 ? hand / hand_count * 100.0 : 0.0;
    return e;
}

double e_v2v(const MotionSequence& pred_pose_seq, const MotionSequence& gt_pose_seq,
             const ObjectPointCloud& points, std::vector<double>* per_frame) {
    if (pred_pose_seq.dims != gt_pose_seq.dims || pred_pose_seq.dim(1) != 6) {
        throw shape_error("e_v2v: pose sequences must both be L x 6, got " +
                          shape_str(pred_pose_seq.dims) + " vs " + shape_str(gt_pose_seq.dims));
    }
    const int frames = pred_pose_seq.dim(0);
    double total = 0;
    if (per_frame) per_frame->clear();
    for (int f = 0; f < frames; ++f) {
        const auto pred = transform_points(points, pose_from_row(pred_pose_seq, f));
        const auto gt = transform_points(points, pose_from_row(gt_pose_seq, f));
        double acc = 0;
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            const double d = pred.data[i] - gt.data[i];
            acc += d * d;
        }
        const double frob = std::sqrt(acc);
        total += frob;
        if (per_frame) per_frame->push_back(frob);
    }
    return total / frames;
}

double e_c(const MotionSequence& pred_pose_seq, const MotionSequence& gt_pose_seq,
           std::vector<double>* per_frame) {
    if (pred_pose_seq.dims != gt_pose_seq.dims || pred_pose_seq.dim(1) != 6) {
        throw shape_error("e_c: pose sequences must both be L x 6, got " +
                          shape_str(pred_pose_seq.dims) + " vs " + shape_str(gt_pose_seq.dims));
    }
    const int frames = pred_pose_seq.dim(0);
    double total = 0;
    if (per_frame) per_frame->clear();
    for (int f = 0; f < frames; ++f) {
        double acc = 0;
        for (int c = 0; c < 3; ++c) {
            const double d = double(pred_pose_seq.at(f, c)) - gt_pose_seq.at(f, c);
            acc += d * d;
        }
        const double dist = std::sqrt(acc);
        total += dist;
        if (per_frame) per_frame->push_back(dist);
    }
    return total / frames;
}

double chamfer(const Tensor<double>& x, const Tensor<double>& y) {
    if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != 3 || y.dim(1) != 3 || x.dim(0) < 1 ||
        y.dim(0) < 1) {
        throw domain_error("chamfer: need nonempty N x 3 point sets, got " + shape_str(x.dims) +
                           " and " + shape_str(y.dims));
    }
    auto one_way = [](const Tensor<double>& a, const Tensor<double>& b) {
        double total = 0;
        for (int i = 0; i < a.dim(0); ++i) {
            double best = 1e300;
            for (int j = 0; j < b.dim(0); ++j) {
                double acc = 0;
                for (int c = 0; c < 3; ++c) {
                    const double d = a.at(i, c) - b.at(j, c);
                    acc += d * d;
                }
                best = std::min(best, acc);
            }
            total += std::sqrt(best);
        }
        return total / a.dim(0);
    };
    return one_way(x, y) + one_way(y, x);
}

void jacobi_eigen(const Tensor<double>& sym, Tensor<double>& eigvals, Tensor<double>& eigvecs) {
    if (sym.rank() != 2 || sym.dim(0) != sym.dim(1)) {
        throw shape_error("jacobi_eigen: need a square matrix, got " + shape_str(sym.dims));
    }
    const int n = sym.dim(0);
    Tensor<double> a = sym;
    eigvecs = Tensor<double>({n, n});
    for (int i = 0; i < n; ++i) eigvecs.at(i, i) = 1.0;

    for (int sweep = 0; sweep < 128; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a.at(p, q)) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * a.at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = eigvecs.at(i, p), viq = eigvecs.at(i, q);
                    eigvecs.at(i, p) = c * vip - s * viq;
                    eigvecs.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    eigvals = Tensor<double>({n});
    for (int i = 0; i < n; ++i) eigvals.at(i) = a.at(i, i);
}

namespace {

Tensor<double> sqrtm_psd(const Tensor<double>& sym) {
    Tensor<double> vals, vecs;
    jacobi_eigen(sym, vals, vecs);
    const int n = sym.dim(0);
    Tensor<double> out({n, n});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int k = 0; k < n; ++k) {
                const double lam = std::max(vals.at(k), 0.0);
                acc += vecs.at(i, k) * std::sqrt(lam) * vecs.at(j, k);
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

Tensor<double> matmul_dd(const Tensor<double>& a, const Tensor<double>& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<double> out({m, n});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double apk = a.at(i, p);
            for (int j = 0; j < n; ++j) out.at(i, j) += apk * b.at(p, j);
        }
    return out;
}

void mean_cov(const Tensor<double>& f, std::vector<double>& mu, Tensor<double>& cov) {
    const int n = f.dim(0), d = f.dim(1);
    mu.assign(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mu[static_cast<std::size_t>(j)] += f.at(i, j);
    for (auto& v : mu) v /= n;
    cov = Tensor<double>({d, d});
    const double denom = n > 1 ? n - 1.0 : 1.0;
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < d; ++a) {
            const double da = f.at(i, a) - mu[static_cast<std::size_t>(a)];
            for (int b = 0; b < d; ++b) {
                cov.at(a, b) += da * (f.at(i, b) - mu[static_cast<std::size_t>(b)]) / denom;
            }
        }
    }
    for (int a = 0; a < d; ++a) cov.at(a, a) += 1e-6;
}

}  // namespace

double frechet_feature_distance(const Tensor<double>& features_a,
                                const Tensor<double>& features_b) {
    if (features_a.rank() != 2 || features_b.rank() != 2 ||
        features_a.dim(1) != features_b.dim(1)) {
        throw shape_error("frechet: feature matrices must share width, got " +
                          shape_str(features_a.dims) + " vs " + shape_str(features_b.dims));
    }
    if (!features_a.all_finite() || !features_b.all_finite()) {
        throw domain_error("frechet: non-finite features");
    }
    const int d = features_a.dim(1);
    std::vector<double> mu_a, mu_b;
    Tensor<double> cov_a, cov_b;
    mean_cov(features_a, mu_a, cov_a);
    mean_cov(features_b, mu_b, cov_b);

    double mean_term = 0;
    for (int j = 0; j < d; ++j) {
        const double dmu = mu_a[static_cast<std::size_t>(j)] - mu_b[static_cast<std::size_t>(j)];
        mean_term += dmu * dmu;
    }
    double trace_term = 0;
    for (int j = 0; j < d; ++j) trace_term += cov_a.at(j, j) + cov_b.at(j, j);

    // Tr sqrt(Sa Sb) via the symmetrized product sqrt(Sa)^T Sb sqrt(Sa)
    const Tensor<double> root_a = sqrtm_psd(cov_a);
    Tensor<double> inner = matmul_dd(matmul_dd(root_a, cov_b), root_a);
    // enforce symmetry against accumulation noise
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            const double v = 0.5 * (inner.at(i, j) + inner.at(j, i));
            inner.at(i, j) = v;
            inner.at(j, i) = v;
        }
    }
    Tensor<double> vals, vecs;
    jacobi_eigen(inner, vals, vecs);
    double sqrt_trace = 0;
    for (int j = 0; j < d; ++j) sqrt_trace += std::sqrt(std::max(vals.at(j), 0.0));

    return mean_term + trace_term - 2.0 * sqrt_trace;
}

double diversity(const Tensor<double>& features, int n_pairs, std::uint64_t seed) {
    if (features.rank() != 2 || features.dim(0) < 2) {
        throw domain_error("diversity: need at least 2 feature rows");
    }
    const int n = features.dim(0), d = features.dim(1);
    Rng rng = Rng::derive(seed, 0xd1e2);
    double total = 0;
    int made = 0;
    for (int p = 0; p < n_pairs; ++p) {
        // disjoint pair: two distinct row indices
        const int a = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        int b = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - 1)));
        if (b >= a) ++b;
        double acc = 0;
        for (int j = 0; j < d; ++j) {
            const double diff = features.at(a, j) - features.at(b, j);
            acc += diff * diff;
        }
        total += std::sqrt(acc);
        ++made;
    }
    return made > 0 ? total / made : 0.0;
}

Tensor<double> hands_series(const HumanMotion& human) {
    const int frames = human.length();
    Tensor<double> out({frames, 2, 3});
    const int hl = human.layout.left_hand, hr = human.layout.right_hand;
    for (int f = 0; f < frames; ++f) {
        for (int c = 0; c < 3; ++c) {
            out.at(f, 0, c) = human.frames.at(f, 3 * hl + c);
            out.at(f, 1, c) = human.frames.at(f, 3 * hr + c);
        }
    }
    return out;
}

Tensor<double> joints_series(const HumanMotion& human) {
    const int frames = human.length(), joints = human.layout.joints;
    Tensor<double> out({frames, joints, 3});
    for (int f = 0; f < frames; ++f)
        for (int j = 0; j < joints; ++j)
            for (int c = 0; c < 3; ++c) out.at(f, j, c) = human.frames.at(f, 3 * j + c);
    return out;
}

Tensor<double> object_points_series(const MotionSequence& object_pose,
                                    const ObjectPointCloud& cloud) {
    const int frames = object_pose.dim(0), n = cloud.count();
    Tensor<double> out({frames, n, 3});
    for (int f = 0; f < frames; ++f) {
        const auto world = transform_points(cloud, pose_from_row(object_pose, f));
        std::copy(world.data.begin(), world.data.end(), out.data.begin() + static_cast<std::size_t>(f) * n * 3);
    }
    return out;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    put("c_prec", c_prec);
    put("c_rec", c_rec);
    put("c_acc", c_acc);
    put("contact_pct", contact_pct);
    put("gt_contact_pct", gt_contact_pct);
    put("hand_jpe_cm", hand_jpe_cm);
    put("mpjpe_cm", mpjpe_cm);
    put("e_v2v", e_v2v);
    put("e_c", e_c);
    put("e_ch", e_ch);
    put("fid", fid);
    put("diversity", diversity);
    put("r_precision_top1", r_precision_top1);
    put("r_precision_top2", r_precision_top2);
    put("r_precision_top3", r_precision_top3);
    j["degenerate"] = degenerate;
    if (raw_tp >= 0) {
        j["raw_counts"] = {{"tp", raw_tp}, {"fp", raw_fp}, {"fn", raw_fn}, {"tn", raw_tn}};
    }
    return j.dump(2) + "\n";
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    auto row = [&](const char* name, const std::optional<double>& v) {
        if (v) os << std::left << std::setw(18) << name << *v << "\n";
    };
    row("c_prec", c_prec);
    row("c_rec", c_rec);
    row("c_acc", c_acc);
    row("contact_pct", contact_pct);
    row("gt_contact_pct", gt_contact_pct);
    row("hand_jpe_cm", hand_jpe_cm);
    row("mpjpe_cm", mpjpe_cm);
    row("e_v2v", e_v2v);
    row("e_c", e_c);
    row("e_ch", e_ch);
    row("fid", fid);
    row("diversity", diversity);
    row("r_top1", r_precision_top1);
    row("r_top2", r_precision_top2);
    row("r_top3", r_precision_top3);
    if (degenerate) os << "degenerate         true\n";
    return os.str();
}

}  // namespace hoi
