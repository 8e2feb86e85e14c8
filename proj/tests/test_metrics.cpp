#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hoi/metrics.hpp"
#include "hoi/rng.hpp"
#include "hoi/synthetic.hpp"

using namespace hoi;

namespace {

Tensor<double> random_points(int n, Rng& rng, double scale = 1.0) {
    Tensor<double> p({n, 3});
    for (auto& v : p.data) v = rng.gaussian() * scale;
    return p;
}

}  // namespace

TEST_CASE("contact: perfect prediction and total miss") {
    // object fixed at origin; hands either touching or a meter away
    const int frames = 6;
    Tensor<double> points({frames, 1, 3});
    Tensor<double> touch({frames, 2, 3}), far({frames, 2, 3});
    for (int f = 0; f < frames; ++f) {
        for (int h = 0; h < 2; ++h) {
            touch.at(f, h, 0) = 0.01;
            far.at(f, h, 0) = 1.0;
        }
    }
    // gt in contact on all frames; pred == gt -> perfect rates
    auto stats = contact_metrics(touch, touch, points, 0.05);
    auto rates = contact_rates(stats);
    CHECK(stats.tp == frames);
    CHECK(rates.c_prec == 1.0);
    CHECK(rates.c_rec == 1.0);
    CHECK(rates.c_acc == 1.0);
    CHECK(rates.contact_pct == 1.0);

    // pred always far, gt always contact -> all misses
    auto miss = contact_metrics(far, touch, points, 0.05);
    auto miss_rates = contact_rates(miss);
    CHECK(miss.tp == 0);
    CHECK(miss.fn == frames);
    CHECK(miss_rates.c_rec == 0.0);
    CHECK(miss_rates.c_acc == 0.0);
    CHECK(miss_rates.degenerate);  // no predicted positives -> precision denominator 0

    CHECK_THROWS_AS(contact_metrics(touch, touch, Tensor<double>({3, 1, 3}), 0.05), Error);
}

TEST_CASE("contact: hand-enumerated 6-frame truth table") {
    // one object point at the origin, threshold 0.05
    const int frames = 6;
    Tensor<double> points({frames, 1, 3});
    // frame:          0      1      2      3      4      5
    // pred distance: 0.01   0.20   0.03   0.30   0.04   0.40
    // gt distance:   0.02   0.01   0.30   0.40   0.01   0.30
    // outcome:        TP     FN     FP     TN     TP     TN
    const double pred_d[6] = {0.01, 0.20, 0.03, 0.30, 0.04, 0.40};
    const double gt_d[6] = {0.02, 0.01, 0.30, 0.40, 0.01, 0.30};
    Tensor<double> pred({frames, 2, 3}), gt({frames, 2, 3});
    for (int f = 0; f < frames; ++f) {
        pred.at(f, 0, 0) = pred_d[f];
        pred.at(f, 1, 0) = 2.0;  // second hand far
        gt.at(f, 0, 0) = gt_d[f];
        gt.at(f, 1, 0) = 2.0;
    }
    auto stats = contact_metrics(pred, gt, points, 0.05);
    CHECK(stats.tp == 2);
    CHECK(stats.fn == 1);
    CHECK(stats.fp == 1);
    CHECK(stats.tn == 2);
    auto rates = contact_rates(stats);
    CHECK(rates.c_prec == doctest::Approx(2.0 / 3.0));
    CHECK(rates.c_rec == doctest::Approx(2.0 / 3.0));
    CHECK(rates.c_acc == doctest::Approx(4.0 / 6.0));
    CHECK(rates.contact_pct == doctest::Approx(3.0 / 6.0));
    CHECK(!rates.degenerate);

    // merging raw counts reproduces aggregate rates
    ContactStats merged;
    merged.tp = stats.tp * 3;
    merged.fp = stats.fp * 3;
    merged.fn = stats.fn * 3;
    merged.tn = stats.tn * 3;
    auto merged_rates = contact_rates(merged);
    CHECK(merged_rates.c_prec == rates.c_prec);
    CHECK(merged_rates.c_acc == rates.c_acc);
}

TEST_CASE("joint_errors: identity, constant offset, naive oracle") {
    Rng rng(3);
    Tensor<double> gt({5, 4, 3});
    for (auto& v : gt.data) v = rng.gaussian();
    auto zero = joint_errors(gt, gt, {2, 3});
    CHECK(zero.mpjpe_cm == 0.0);
    CHECK(zero.hand_jpe_cm == 0.0);

    // uniform 1 cm offset
    Tensor<double> off = gt;
    for (int f = 0; f < 5; ++f)
        for (int j = 0; j < 4; ++j) off.at(f, j, 0) += 0.01;
    auto one = joint_errors(off, gt, {2, 3});
    CHECK(one.mpjpe_cm == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(one.hand_jpe_cm == doctest::Approx(1.0).epsilon(1e-9));

    // random case against a naive double loop
    Tensor<double> pred({5, 4, 3});
    for (auto& v : pred.data) v = rng.gaussian();
    auto got = joint_errors(pred, gt, {1});
    double all = 0, hand = 0;
    for (int f = 0; f < 5; ++f) {
        for (int j = 0; j < 4; ++j) {
            const double dx = pred.at(f, j, 0) - gt.at(f, j, 0);
            const double dy = pred.at(f, j, 1) - gt.at(f, j, 1);
            const double dz = pred.at(f, j, 2) - gt.at(f, j, 2);
            const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
            all += d;
            if (j == 1) hand += d;
        }
    }
    CHECK(got.mpjpe_cm == doctest::Approx(all / 20 * 100).epsilon(1e-6));
    CHECK(got.hand_jpe_cm == doctest::Approx(hand / 5 * 100).epsilon(1e-6));
}

TEST_CASE("e_v2v: identity, translation closed form, brute-force oracle") {
    auto cloud = make_pointcloud(ShapeTag::Sphere, 24, 5, 0.1);
    Rng rng(9);
    MotionSequence pose({4, 6});
    for (auto& v : pose.data) v = static_cast<float>(rng.uniform(-1, 1));
    CHECK(e_v2v(pose, pose, cloud) == 0.0);

    // pure translation by t with equal rotation: per-frame value = ||t|| * sqrt(N)
    MotionSequence shifted = pose;
    const double t[3] = {0.3, -0.4, 1.2};
    for (int f = 0; f < 4; ++f)
        for (int c = 0; c < 3; ++c) shifted.at(f, c) += static_cast<float>(t[c]);
    const double t_norm = std::sqrt(0.09 + 0.16 + 1.44);
    std::vector<double> per_frame;
    const double got = e_v2v(shifted, pose, cloud, &per_frame);
    CHECK(got == doctest::Approx(t_norm * std::sqrt(24.0)).epsilon(1e-5));
    REQUIRE(per_frame.size() == 4);
    for (double v : per_frame) CHECK(v == doctest::Approx(t_norm * std::sqrt(24.0)).epsilon(1e-5));

    // random poses against an elementwise recomputation
    MotionSequence pred({3, 6}), gt({3, 6});
    for (auto& v : pred.data) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : gt.data) v = static_cast<float>(rng.uniform(-1, 1));
    double manual = 0;
    for (int f = 0; f < 3; ++f) {
        const auto p = transform_points(cloud, pose_from_row(pred, f));
        const auto g = transform_points(cloud, pose_from_row(gt, f));
        double acc = 0;
        for (int i = 0; i < 24; ++i)
            for (int c = 0; c < 3; ++c) {
                const double d = p.at(i, c) - g.at(i, c);
                acc += d * d;
            }
        manual += std::sqrt(acc);
    }
    CHECK(e_v2v(pred, gt, cloud) == doctest::Approx(manual / 3).epsilon(1e-5));
}

TEST_CASE("e_c: rotation-blind, constant offset, naive oracle") {
    Rng rng(11);
    MotionSequence a({5, 6}), b({5, 6});
    for (int f = 0; f < 5; ++f) {
        for (int c = 0; c < 3; ++c) {
            a.at(f, c) = static_cast<float>(rng.uniform(-1, 1));
            b.at(f, c) = a.at(f, c);
        }
        // rotations differ wildly
        for (int c = 3; c < 6; ++c) {
            a.at(f, c) = static_cast<float>(rng.uniform(-2, 2));
            b.at(f, c) = static_cast<float>(rng.uniform(-2, 2));
        }
    }
    CHECK(e_c(a, b) == 0.0);

    MotionSequence c = b;
    for (int f = 0; f < 5; ++f) {
        c.at(f, 0) += 0.3f;
        c.at(f, 2) -= 0.4f;
    }
    CHECK(e_c(c, b) == doctest::Approx(0.5).epsilon(1e-6));

    MotionSequence r1({4, 6}), r2({4, 6});
    for (auto& v : r1.data) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : r2.data) v = static_cast<float>(rng.uniform(-1, 1));
    double manual = 0;
    for (int f = 0; f < 4; ++f) {
        double acc = 0;
        for (int col = 0; col < 3; ++col) {
            const double d = double(r1.at(f, col)) - r2.at(f, col);
            acc += d * d;
        }
        manual += std::sqrt(acc);
    }
    CHECK(e_c(r1, r2) == doctest::Approx(manual / 4).epsilon(1e-9));
}

TEST_CASE("chamfer: identity, symmetry, brute-force oracle") {
    Rng rng(13);
    auto x = random_points(20, rng);
    auto y = random_points(15, rng);
    CHECK(chamfer(x, x) == 0.0);
    CHECK(chamfer(x, y) == doctest::Approx(chamfer(y, x)).epsilon(1e-12));

    // independent recomputation
    double fwd = 0;
    for (int i = 0; i < 20; ++i) {
        double best = 1e300;
        for (int j = 0; j < 15; ++j) {
            double acc = 0;
            for (int c = 0; c < 3; ++c) {
                const double d = x.at(i, c) - y.at(j, c);
                acc += d * d;
            }
            best = std::min(best, acc);
        }
        fwd += std::sqrt(best);
    }
    double bwd = 0;
    for (int j = 0; j < 15; ++j) {
        double best = 1e300;
        for (int i = 0; i < 20; ++i) {
            double acc = 0;
            for (int c = 0; c < 3; ++c) {
                const double d = x.at(i, c) - y.at(j, c);
                acc += d * d;
            }
            best = std::min(best, acc);
        }
        bwd += std::sqrt(best);
    }
    CHECK(chamfer(x, y) == doctest::Approx(fwd / 20 + bwd / 15).epsilon(1e-6));

    CHECK_THROWS_AS(chamfer(Tensor<double>({1, 2}), y), Error);
}

TEST_CASE("frechet: identity, mean offset, 2-D closed form") {
    Rng rng(17);
    Tensor<double> f({200, 4});
    for (auto& v : f.data) v = rng.gaussian();
    CHECK(frechet_feature_distance(f, f) < 1e-4);

    // antithetic draws: sample means hit the target exactly, leaving only
    // covariance-estimation noise
    auto antithetic = [&rng](Tensor<double>& m, int col, double scl, double shift) {
        const int rows = m.dim(0);
        for (int i = 0; i < rows; i += 2) {
            const double z = rng.gaussian();
            m.at(i, col) = z * scl + shift;
            m.at(i + 1, col) = -z * scl + shift;
        }
    };

    // equal covariance, mean offset delta -> about ||delta||^2
    const int n = 20000;
    Tensor<double> a({n, 2}), b({n, 2});
    antithetic(a, 0, 1.0, 0.0);
    antithetic(a, 1, 1.0, 0.0);
    antithetic(b, 0, 1.0, 0.8);
    antithetic(b, 1, 1.0, -0.6);
    const double fid_offset = frechet_feature_distance(a, b);
    CHECK(fid_offset == doctest::Approx(1.0).epsilon(0.05));

    // analytic case: S1 = diag(1,2), S2 = diag(2,1), mean diff (1,1)
    // d^2 = 2 + (3 + 3 - 2 Tr(diag(sqrt2, sqrt2))) = 2 + 6 - 4 sqrt 2
    Tensor<double> g1({n, 2}), g2({n, 2});
    antithetic(g1, 0, 1.0, 0.0);
    antithetic(g1, 1, std::sqrt(2.0), 0.0);
    antithetic(g2, 0, std::sqrt(2.0), 1.0);
    antithetic(g2, 1, 1.0, 1.0);
    const double expect = 2.0 + 6.0 - 4.0 * std::sqrt(2.0);
    const double got = frechet_feature_distance(g1, g2);
    CHECK(std::abs(got - expect) / expect < 0.02);
}

TEST_CASE("jacobi eigensolver reconstructs symmetric matrices") {
    Rng rng(23);
    const int d = 6;
    Tensor<double> m({d, d});
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            const double v = rng.gaussian();
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    Tensor<double> vals, vecs;
    jacobi_eigen(m, vals, vecs);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            double acc = 0;
            for (int k = 0; k < d; ++k) acc += vecs.at(i, k) * vals.at(k) * vecs.at(j, k);
            CHECK(acc == doctest::Approx(m.at(i, j)).epsilon(1e-8));
        }
    }
}

TEST_CASE("diversity: degenerate, two-point clusters, reproducible") {
    Tensor<double> same({5, 3});
    for (auto& v : same.data) v = 1.5;
    CHECK(diversity(same, 40, 7) == 0.0);

    // one point per cluster at distance D: every disjoint pair crosses
    Tensor<double> two({2, 3});
    two.at(1, 0) = 3.0;
    two.at(1, 1) = 4.0;  // D = 5
    CHECK(diversity(two, 16, 3) == doctest::Approx(5.0));

    Rng rng(29);
    Tensor<double> f({30, 4});
    for (auto& v : f.data) v = rng.gaussian();
    CHECK(diversity(f, 25, 11) == diversity(f, 25, 11));
    CHECK(diversity(f, 25, 11) != diversity(f, 25, 12));

    CHECK_THROWS_AS(diversity(Tensor<double>({1, 3}), 5, 1), Error);
}

TEST_CASE("metric report: json schema and table") {
    MetricReport r;
    r.c_prec = 0.9;
    r.c_acc = 0.8;
    r.e_c = 0.05;
    r.raw_tp = 10;
    r.raw_fp = 2;
    r.raw_fn = 1;
    r.raw_tn = 20;
    const std::string js = r.to_json();
    CHECK(js.find("\"c_prec\"") != std::string::npos);
    CHECK(js.find("\"e_c\"") != std::string::npos);
    CHECK(js.find("\"fid\"") == std::string::npos);  // absent metrics stay absent
    CHECK(js.find("raw_counts") != std::string::npos);
    const std::string table = r.to_table();
    CHECK(table.find("c_prec") != std::string::npos);
}

TEST_CASE("generator contact masks agree with the metrics contact detector") {
    // two independent code paths: generator-side inline distances vs the
    // metrics pipeline built from transform_points + contact_flags
    auto samples = generate_synthetic_dataset(31, 20, 24, default_templates());
    for (const auto& s : samples) {
        const auto hands = hands_series(s.human);
        const auto points = object_points_series(s.object.frames, s.points);
        const auto flags = contact_flags(hands, points, kDefaultContactThreshold);
        REQUIRE(flags.size() == s.contact_mask.size());
        for (std::size_t f = 0; f < flags.size(); ++f) CHECK(flags[f] == s.contact_mask[f]);
    }
}
