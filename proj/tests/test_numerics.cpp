#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hoi/autograd.hpp"
#include "hoi/checkpoint.hpp"
#include "hoi/finite_diff.hpp"
#include "hoi/layers.hpp"
#include "hoi/optim.hpp"
#include "hoi/rng.hpp"

using namespace hoi;

namespace {

TensorD random_tensor(Shape dims, Rng& rng, double scale = 1.0) {
    TensorD t(dims);
    for (auto& v : t.data) v = rng.gaussian() * scale;
    return t;
}

// Gradient contract harness: loss(x) = sum(w * op(x)) with fixed random w;
// compares tape gradient against the central-difference oracle.
double fd_check(const std::function<Var<double>(const Var<double>&)>& op, const TensorD& x0,
                Rng& rng, double h = 1e-5) {
    Var<double> probe_var(x0, true);
    Var<double> out = op(probe_var);
    TensorD w = random_tensor(out.val().dims, rng);
    auto weighted = [&w](const Var<double>& y) {
        return sum(mul(y, constant(TensorD(w))));
    };
    Var<double> loss = weighted(out);
    backward(loss);
    TensorD analytic = probe_var.grad();

    auto f = [&](const TensorD& x) -> double {
        Var<double> xv(x, false);
        Var<double> y = op(xv);
        double acc = 0;
        for (std::size_t i = 0; i < y.val().data.size(); ++i)
            acc += y.val().data[i] * w.data[i];
        return acc;
    };
    TensorD numeric = finite_diff_grad<double>(f, x0, h);
    return grad_rel_error(analytic, numeric);
}

}  // namespace

TEST_CASE("rng: deterministic streams and basic ranges") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42), d(43);
    CHECK(c.next_u64() != d.next_u64());
    Rng e(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = e.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(e.uniform_int(10) < 10);
    }
    Rng s1 = Rng::derive(5, 0), s2 = Rng::derive(5, 1);
    CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("matmul: identity, zeros, hand arithmetic") {
    TensorD eye({2, 2}, {1, 0, 0, 1});
    TensorD x({2, 3}, {1, 2, 3, 4, 5, 6});
    auto out = matmul(constant(TensorD(eye)), constant(TensorD(x)));
    for (int i = 0; i < 6; ++i) CHECK(out.val().data[i] == doctest::Approx(x.data[i]));

    TensorD zeros({2, 3});
    TensorD y({3, 4}, std::vector<double>(12, 1.5));
    auto z = matmul(constant(TensorD(zeros)), constant(TensorD(y)));
    CHECK(z.val().dims == Shape{2, 4});
    for (double v : z.val().data) CHECK(v == 0.0);

    TensorD a({2, 2}, {1, 2, 3, 4});
    TensorD b({2, 2}, {5, 6, 7, 8});
    auto c = matmul(constant(TensorD(a)), constant(TensorD(b)));
    CHECK(c.val().data == std::vector<double>{19, 22, 43, 50});

    CHECK_THROWS_AS(matmul(constant(TensorD({2, 3})), constant(TensorD({2, 3}))), Error);
}

TEST_CASE("conv1d: identity kernel, length formula, naive oracle") {
    // k=1, stride=1, identity channel map
    Rng rng(1);
    TensorD x = random_tensor({6, 3}, rng);
    TensorD w({3, 3, 1});
    for (int i = 0; i < 3; ++i) w.at(i, i, 0) = 1.0;
    TensorD b({3});
    auto out = conv1d(constant(TensorD(x)), constant(TensorD(w)), constant(TensorD(b)), 1, 0);
    REQUIRE(out.val().dims == x.dims);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        CHECK(out.val().data[i] == doctest::Approx(x.data[i]));

    // stride=2 on L=8 with k=3, padding=1 -> L_out = 4
    TensorD x8 = random_tensor({8, 2}, rng);
    TensorD w2 = random_tensor({5, 2, 3}, rng);
    TensorD b2 = random_tensor({5}, rng);
    auto out2 = conv1d(constant(TensorD(x8)), constant(TensorD(w2)), constant(TensorD(b2)), 2, 1);
    CHECK(out2.val().dims == Shape{4, 5});

    // naive sliding-window oracle on random 5x2 input, k=3
    TensorD x5 = random_tensor({5, 2}, rng);
    TensorD w3 = random_tensor({4, 2, 3}, rng);
    TensorD b3 = random_tensor({4}, rng);
    const int stride = 1, padding = 1;
    auto got = conv1d(constant(TensorD(x5)), constant(TensorD(w3)), constant(TensorD(b3)),
                      stride, padding);
    const int l_out = (5 + 2 * padding - 3) / stride + 1;
    for (int t = 0; t < l_out; ++t) {
        for (int co = 0; co < 4; ++co) {
            double acc = b3.at(co);
            for (int j = 0; j < 3; ++j) {
                const int u = t * stride + j - padding;
                if (u < 0 || u >= 5) continue;
                for (int ci = 0; ci < 2; ++ci) acc += x5.at(u, ci) * w3.at(co, ci, j);
            }
            CHECK(got.val().at(t, co) == doctest::Approx(acc).epsilon(1e-10));
        }
    }

    // kernel exceeding padded length
    CHECK_THROWS_AS(conv1d(constant(TensorD({2, 1})), constant(TensorD({1, 1, 5})),
                           constant(TensorD({1})), 1, 1),
                    Error);
}

TEST_CASE("upsample_nearest: identity, definition, length formula") {
    TensorD x({2, 1}, {1, 2});
    auto same = upsample_nearest(constant(TensorD(x)), 1);
    CHECK(same.val().data == x.data);
    auto dup = upsample_nearest(constant(TensorD(x)), 2);
    CHECK(dup.val().data == std::vector<double>{1, 1, 2, 2});
    Rng rng(3);
    for (auto [l, f] : {std::pair{3, 2}, std::pair{4, 3}}) {
        auto out = upsample_nearest(constant(random_tensor({l, 2}, rng)), f);
        CHECK(out.val().dim(0) == l * f);
    }
}

TEST_CASE("groupnorm1: zero-variance case and normalization identity") {
    TensorD x({3, 2}, std::vector<double>(6, 4.2));
    TensorD gamma({2}, {1, 1});
    TensorD beta({2}, {0, 0});
    auto out = groupnorm1(constant(TensorD(x)), constant(TensorD(gamma)), constant(TensorD(beta)),
                          1e-5);
    for (double v : out.val().data) CHECK(std::abs(v) < 1e-9);

    Rng rng(5);
    TensorD xr = random_tensor({8, 4}, rng, 2.0);
    auto norm = groupnorm1(constant(TensorD(xr)), constant(TensorD(TensorD({4}, {1, 1, 1, 1}))),
                           constant(TensorD(TensorD({4}))), 1e-9);
    double mu = 0, var = 0;
    for (double v : norm.val().data) mu += v;
    mu /= norm.val().numel();
    for (double v : norm.val().data) var += (v - mu) * (v - mu);
    var /= norm.val().numel();
    CHECK(std::abs(mu) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-5);
}

TEST_CASE("softmax: rows sum to one, nonnegative") {
    Rng rng(7);
    TensorD x = random_tensor({10, 6}, rng, 3.0);
    auto sm = softmax_rows(constant(TensorD(x)));
    for (int i = 0; i < 10; ++i) {
        double s = 0;
        for (int j = 0; j < 6; ++j) {
            CHECK(sm.val().at(i, j) >= 0.0);
            s += sm.val().at(i, j);
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("cross entropy: uniform, dominant-logit limit, hand case, bad target") {
    const int v = 13;
    TensorD uniform({4, v}, std::vector<double>(4 * v, 0.7));
    auto loss = cross_entropy_from_logits(constant(TensorD(uniform)), {0, 5, 7, 12});
    CHECK(loss.val().data[0] == doctest::Approx(std::log(double(v))).epsilon(1e-9));

    TensorD dominant({1, 3}, {0.0, 60.0, 0.0});
    auto tiny = cross_entropy_from_logits(constant(TensorD(dominant)), {1});
    CHECK(tiny.val().data[0] < 1e-8);

    TensorD hand({1, 3}, {1.0, 2.0, 3.0});
    auto l3 = cross_entropy_from_logits(constant(TensorD(hand)), {2});
    const double expect = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
    CHECK(l3.val().data[0] == doctest::Approx(expect).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy_from_logits(constant(TensorD(hand)), {3}), Error);
    CHECK_THROWS_AS(
        cross_entropy_from_logits(constant(TensorD(hand)), {1}, std::vector<char>{0}), Error);
}

TEST_CASE("adamw: fixed point, first-step closed form, quadratic bowl") {
    // zero grad, zero weight decay -> parameter unchanged
    Param<double> p(TensorD({3}, {1.0, -2.0, 0.5}), "p");
    AdamW<double>::Options opts;
    opts.weight_decay = 0;
    AdamW<double> opt(opts);
    std::vector<Param<double>*> params{&p};
    opt.step(params);
    CHECK(p.value().data == std::vector<double>{1.0, -2.0, 0.5});

    // one step from m=v=0 with grad g
    Param<double> q(TensorD({2}, {0.3, -0.4}), "q");
    AdamW<double>::Options o2;
    o2.lr = 0.01;
    o2.weight_decay = 0.1;
    AdamW<double> opt2(o2);
    q.grad().data = {0.2, -0.7};
    std::vector<Param<double>*> qs{&q};
    opt2.step(qs);
    for (int i = 0; i < 2; ++i) {
        const double g = (i == 0) ? 0.2 : -0.7;
        const double theta0 = (i == 0) ? 0.3 : -0.4;
        const double expect = theta0 - 0.01 * (g / (std::abs(g) + 1e-8) + 0.1 * theta0);
        CHECK(q.value().data[static_cast<std::size_t>(i)] ==
              doctest::Approx(expect).epsilon(1e-12));
    }

    // quadratic bowl f(x) = x^2 converges
    Param<double> x(TensorD({1}, {2.5}), "x");
    AdamW<double>::Options o3;
    o3.lr = 0.1;
    o3.weight_decay = 0;
    AdamW<double> opt3(o3);
    std::vector<Param<double>*> xs{&x};
    for (int step = 0; step < 500; ++step) {
        x.var.zero_grad();
        x.grad().data[0] = 2.0 * x.value().data[0];
        opt3.step(xs);
    }
    CHECK(std::abs(x.value().data[0]) < 1e-3);

    // non-finite gradient names the parameter
    Param<double> bad(TensorD({1}, {0.0}), "layer7.weight");
    bad.grad().data[0] = std::nan("");
    std::vector<Param<double>*> bs{&bad};
    AdamW<double> opt4({});
    try {
        opt4.step(bs);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("layer7.weight") != std::string::npos);
        CHECK(e.code() == "E_TRAIN");
    }
}

TEST_CASE("finite_diff_grad: linear and quadratic analytic cases") {
    auto f_sum = [](const TensorD& x) {
        double s = 0;
        for (double v : x.data) s += v;
        return s;
    };
    Rng rng(11);
    TensorD x = random_tensor({5}, rng);
    TensorD g = finite_diff_grad<double>(f_sum, x, 1e-5);
    for (double v : g.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-8));

    auto f_sq = [](const TensorD& t) { return t.data[0] * t.data[0]; };
    TensorD x3({1}, {3.0});
    TensorD g3 = finite_diff_grad<double>(f_sq, x3, 1e-5);
    CHECK(std::abs(g3.data[0] - 6.0) < 1e-6);

    auto f_bad = [](const TensorD&) { return std::nan(""); };
    CHECK_THROWS_AS(finite_diff_grad<double>(f_bad, x3, 1e-5), Error);
}

TEST_CASE("gradient contract: every layer matches finite differences") {
    Rng rng(2024);
    const double tol = 1e-4;
    for (int trial = 0; trial < 20; ++trial) {
        // matmul wrt both operands
        TensorD a = random_tensor({3, 4}, rng);
        TensorD b = random_tensor({4, 2}, rng);
        CHECK(fd_check([&](const Var<double>& x) { return matmul(x, constant(TensorD(b))); }, a,
                       rng) < tol);
        CHECK(fd_check([&](const Var<double>& x) { return matmul(constant(TensorD(a)), x); }, b,
                       rng) < tol);

        // conv1d wrt input, weight, bias
        TensorD cx = random_tensor({7, 3}, rng);
        TensorD cw = random_tensor({4, 3, 3}, rng);
        TensorD cb = random_tensor({4}, rng);
        CHECK(fd_check(
                  [&](const Var<double>& x) {
                      return conv1d(x, constant(TensorD(cw)), constant(TensorD(cb)), 2, 1);
                  },
                  cx, rng) < tol);
        CHECK(fd_check(
                  [&](const Var<double>& w) {
                      return conv1d(constant(TensorD(cx)), w, constant(TensorD(cb)), 2, 1);
                  },
                  cw, rng) < tol);
        CHECK(fd_check(
                  [&](const Var<double>& bb) {
                      return conv1d(constant(TensorD(cx)), constant(TensorD(cw)), bb, 2, 1);
                  },
                  cb, rng) < tol);

        // elementwise & reductions
        TensorD e = random_tensor({4, 5}, rng);
        CHECK(fd_check([](const Var<double>& x) { return relu(x); }, e, rng) < tol);
        CHECK(fd_check([](const Var<double>& x) { return silu(x); }, e, rng) < tol);
        CHECK(fd_check([](const Var<double>& x) { return gelu(x); }, e, rng) < tol);
        CHECK(fd_check([](const Var<double>& x) { return softmax_rows(x); }, e, rng) < tol);
        CHECK(fd_check([](const Var<double>& x) { return upsample_nearest(x, 3); }, e, rng) < tol);
        CHECK(fd_check([](const Var<double>& x) { return diff_rows(x); }, e, rng) < tol);
        TensorD other = random_tensor({4, 5}, rng);
        CHECK(fd_check([&](const Var<double>& x) { return mse(x, constant(TensorD(other))); }, e,
                       rng) < tol);

        // norms
        TensorD gamma = random_tensor({5}, rng, 0.5);
        TensorD beta = random_tensor({5}, rng, 0.5);
        CHECK(fd_check(
                  [&](const Var<double>& x) {
                      return groupnorm1(x, constant(TensorD(gamma)), constant(TensorD(beta)),
                                        1e-5);
                  },
                  e, rng) < tol);
        CHECK(fd_check(
                  [&](const Var<double>& g) {
                      return groupnorm1(constant(TensorD(e)), g, constant(TensorD(beta)), 1e-5);
                  },
                  gamma, rng) < tol);
        CHECK(fd_check(
                  [&](const Var<double>& x) {
                      return rmsnorm_rows(x, constant(TensorD(gamma)), 1e-6);
                  },
                  e, rng) < tol);
        CHECK(fd_check(
                  [&](const Var<double>& x) {
                      return layernorm_rows(x, constant(TensorD(gamma)), constant(TensorD(beta)),
                                            1e-6);
                  },
                  e, rng) < tol);

        // cross entropy wrt logits
        TensorD logits = random_tensor({5, 7}, rng);
        std::vector<int> targets{1, 0, 6, 3, 2};
        std::vector<char> mask{1, 0, 1, 1, 0};
        {
            Var<double> lx(logits, true);
            auto loss = cross_entropy_from_logits(lx, targets, mask);
            backward(loss);
            auto f = [&](const TensorD& t) {
                return cross_entropy_from_logits(Var<double>(t, false), targets, mask)
                    .val()
                    .data[0];
            };
            TensorD numeric = finite_diff_grad<double>(f, logits, 1e-6);
            CHECK(grad_rel_error(lx.grad(), numeric) < tol);
        }

        // rope + attention
        TensorD q = random_tensor({5, 4, 6}, rng);
        TensorD k = random_tensor({5, 2, 6}, rng);
        TensorD v = random_tensor({5, 2, 6}, rng);
        CHECK(fd_check([](const Var<double>& x) { return rope(x, 10000.0, 0); }, q, rng) < tol);
        CHECK(fd_check(
                  [&](const Var<double>& x) {
                      return gqa_attention(x, constant(TensorD(k)), constant(TensorD(v)));
                  },
                  q, rng) < tol);
        CHECK(fd_check(
                  [&](const Var<double>& x) {
                      return gqa_attention(constant(TensorD(q)), x, constant(TensorD(v)));
                  },
                  k, rng) < tol);
        CHECK(fd_check(
                  [&](const Var<double>& x) {
                      return gqa_attention(constant(TensorD(q)), constant(TensorD(k)), x);
                  },
                  v, rng) < tol);

        // pooling, bias, concat, embedding tables
        CHECK(fd_check([](const Var<double>& x) { return colwise_max(x); }, e, rng) < tol);
        CHECK(fd_check([](const Var<double>& x) { return colwise_mean(x); }, e, rng) < tol);
        TensorD bias = random_tensor({5}, rng);
        CHECK(fd_check([&](const Var<double>& x) { return add_bias(x, constant(TensorD(bias))); },
                       e, rng) < tol);
        CHECK(fd_check([&](const Var<double>& x) { return add_bias(constant(TensorD(e)), x); },
                       bias, rng) < tol);
        TensorD lo = random_tensor({4, 3}, rng);
        TensorD hi = random_tensor({5, 3}, rng);
        std::vector<int> ids{0, 5, 3, 8, 2, 2};
        CHECK(fd_check(
                  [&](const Var<double>& t) {
                      return embed_rows(t, constant(TensorD(hi)), ids);
                  },
                  lo, rng) < tol);
        CHECK(fd_check(
                  [&](const Var<double>& t) {
                      return embed_rows(constant(TensorD(lo)), t, ids);
                  },
                  hi, rng) < tol);
        TensorD feat = random_tensor({1, 3}, rng);
        CHECK(fd_check(
                  [&](const Var<double>& f2) {
                      return embed_rows(constant(TensorD(lo)), constant(TensorD(hi)), ids, 2, f2);
                  },
                  feat, rng) < tol);
    }
}

TEST_CASE("straight-through estimator passes gradients unchanged") {
    Rng rng(5);
    TensorD z = random_tensor({4, 3}, rng);
    TensorD q = random_tensor({4, 3}, rng);
    Var<double> zv(z, true);
    auto st = straight_through(zv, q);
    for (std::size_t i = 0; i < q.data.size(); ++i) CHECK(st.val().data[i] == q.data[i]);
    auto loss = sum(mul(st, st));
    backward(loss);
    // d/dz sum(q*q) via straight-through == 2q (as if identity on z)
    for (std::size_t i = 0; i < q.data.size(); ++i)
        CHECK(zv.grad().data[i] == doctest::Approx(2.0 * q.data[i]));
}

TEST_CASE("checkpoint: bit-exact round trip and format errors") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "hoi_ck_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.hoit").string();

    Rng rng(99);
    Checkpoint ck;
    ck.push_back({"enc.w", {2, 3}, {1.0f, -2.5f, 3.25f, 0.0f, 1e-7f, -42.0f}});
    ck.push_back({"codebook.entries", {4}, {0.1f, 0.2f, 0.3f, 0.4f}});
    write_checkpoint(path, ck);
    Checkpoint back = read_checkpoint(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "enc.w");
    CHECK(back[0].dims == Shape{2, 3});
    CHECK(back[0].data == ck[0].data);
    CHECK(back[1].name == "codebook.entries");

    // write(read(x)) is byte-identical
    const std::string path2 = (dir / "model2.hoit").string();
    write_checkpoint(path2, back);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);

    // corrupted magic
    std::string corrupter = s1;
    corrupter[0] = 'X';
    const std::string bad_path = (dir / "bad.hoit").string();
    std::ofstream(bad_path, std::ios::binary) << corrupter;
    CHECK_THROWS_AS(read_checkpoint(bad_path), Error);

    // truncation
    std::ofstream(bad_path, std::ios::binary) << s1.substr(0, s1.size() - 3);
    try {
        read_checkpoint(bad_path);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == "E_FORMAT");
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }

    // version mismatch
    std::string vbad = s1;
    vbad[4] = 9;
    std::ofstream(bad_path, std::ios::binary) << vbad;
    CHECK_THROWS_AS(read_checkpoint(bad_path), Error);
}

TEST_CASE("adamw + tape: descent on a tiny regression") {
    Rng rng(31);
    TensorD w0 = random_tensor({3, 1}, rng, 0.1);
    Param<double> w(w0, "w");
    TensorD x = random_tensor({8, 3}, rng);
    TensorD w_true = random_tensor({3, 1}, rng);
    TensorD target({8, 1});
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 3; ++j) target.at(i, 0) += x.at(i, j) * w_true.at(j, 0);
    AdamW<double>::Options opts;
    opts.lr = 0.05;
    opts.weight_decay = 0;
    AdamW<double> opt(opts);
    std::vector<Param<double>*> params{&w};
    double first = 0, last = 0;
    for (int step = 0; step < 60; ++step) {
        zero_grads(params);
        auto pred = matmul(constant(TensorD(x)), w.var);
        auto loss = mse(pred, constant(TensorD(target)));
        if (step == 0) first = loss.val().data[0];
        last = loss.val().data[0];
        backward(loss);
        opt.step(params);
    }
    CHECK(last < first * 0.5);
}
