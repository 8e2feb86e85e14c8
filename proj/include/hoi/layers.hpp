#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "hoi/autograd.hpp"

namespace hoi {

// x[L x C] + b[C] broadcast over rows.
template <typename S>
Var<S> add_bias(const Var<S>& x, const Var<S>& b) {
    const auto& xv = x.val();
    const auto& bv = b.val();
    if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
        throw shape_error("add_bias: " + shape_str(xv.dims) + " vs " + shape_str(bv.dims));
    }
    const int r = xv.dim(0), c = xv.dim(1);
    Tensor<S> out = xv;
    for (int i = 0; i < r; ++i) {
        S* o = out.row(i);
        for (int j = 0; j < c; ++j) o[j] += bv.data[static_cast<std::size_t>(j)];
    }
    auto xn = x.node(), bn = b.node();
    auto n = detail::make_node<S>(std::move(out), {xn, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, xn, bn, r, c] {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < self->grad.data.size(); ++i)
                    xn->grad.data[i] += self->grad.data[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    const S* g = self->grad.row(i);
                    for (int j = 0; j < c; ++j) bn->grad.data[static_cast<std::size_t>(j)] += g[j];
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

// Temporal convolution on an [L x C_in] sequence with weight
// [C_out x C_in x k] and zero padding. Output length
// floor((L + 2*padding - k)/stride) + 1.
template <typename S>
Var<S> conv1d(const Var<S>& input, const Var<S>& weight, const Var<S>& bias, int stride,
              int padding) {
    const auto& xv = input.val();
    const auto& wv = weight.val();
    const auto& bv = bias.val();
    if (xv.rank() != 2 || wv.rank() != 3) {
        throw shape_error("conv1d: input " + shape_str(xv.dims) + ", weight " +
                          shape_str(wv.dims));
    }
    const int len = xv.dim(0), c_in = xv.dim(1);
    const int c_out = wv.dim(0), k = wv.dim(2);
    if (wv.dim(1) != c_in) {
        throw shape_error("conv1d: weight expects " + std::to_string(wv.dim(1)) +
                          " input channels, input has " + std::to_string(c_in));
    }
    if (bv.rank() != 1 || bv.dim(0) != c_out) {
        throw shape_error("conv1d: bias " + shape_str(bv.dims) + " for " +
                          std::to_string(c_out) + " output channels");
    }
    if (stride < 1) throw shape_error("conv1d: stride must be positive");
    if (len + 2 * padding < k) {
        throw shape_error("conv1d: kernel " + std::to_string(k) + " exceeds padded length " +
                          std::to_string(len + 2 * padding));
    }
    const int l_out = (len + 2 * padding - k) / stride + 1;
    Tensor<S> out({l_out, c_out});
    for (int t = 0; t < l_out; ++t) {
        S* orow = out.row(t);
        for (int co = 0; co < c_out; ++co) orow[co] = bv.data[static_cast<std::size_t>(co)];
        for (int j = 0; j < k; ++j) {
            const int u = t * stride + j - padding;
            if (u < 0 || u >= len) continue;
            const S* xrow = xv.row(u);
            const S* wbase = wv.data.data() + j;  // stride k over ci, stride c_in*k over co
            for (int co = 0; co < c_out; ++co) {
                const S* wrow = wbase + static_cast<std::size_t>(co) * c_in * k;
                S acc = 0;
                for (int ci = 0; ci < c_in; ++ci) acc += xrow[ci] * wrow[ci * k];
                orow[co] += acc;
            }
        }
    }
    auto xn = input.node(), wn = weight.node(), bn = bias.node();
    auto n = detail::make_node<S>(std::move(out), {xn, wn, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, xn, wn, bn, len, c_in, c_out, k, stride, padding, l_out] {
            const Tensor<S>& g = self->grad;
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int t = 0; t < l_out; ++t) {
                    const S* grow = g.row(t);
                    for (int co = 0; co < c_out; ++co)
                        bn->grad.data[static_cast<std::size_t>(co)] += grow[co];
                }
            }
            for (int t = 0; t < l_out; ++t) {
                const S* grow = g.row(t);
                for (int j = 0; j < k; ++j) {
                    const int u = t * stride + j - padding;
                    if (u < 0 || u >= len) continue;
                    if (wn->requires_grad) {
                        wn->ensure_grad();
                        const S* xrow = xn->val.row(u);
                        S* wgbase = wn->grad.data.data() + j;
                        for (int co = 0; co < c_out; ++co) {
                            const S gv = grow[co];
                            if (gv == S(0)) continue;
                            S* wrow = wgbase + static_cast<std::size_t>(co) * c_in * k;
                            for (int ci = 0; ci < c_in; ++ci) wrow[ci * k] += gv * xrow[ci];
                        }
                    }
                    if (xn->requires_grad) {
                        xn->ensure_grad();
                        S* xgrow = xn->grad.row(u);
                        const S* wvbase = wn->val.data.data() + j;
                        for (int co = 0; co < c_out; ++co) {
                            const S gv = grow[co];
                            if (gv == S(0)) continue;
                            const S* wrow = wvbase + static_cast<std::size_t>(co) * c_in * k;
                            for (int ci = 0; ci < c_in; ++ci) xgrow[ci] += gv * wrow[ci * k];
                        }
                    }
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

// Repeats each frame `factor` times: [L x C] -> [L*factor x C].
template <typename S>
Var<S> upsample_nearest(const Var<S>& input, int factor) {
    const auto& xv = input.val();
    if (xv.rank() != 2) throw shape_error("upsample_nearest: need rank-2, got " + shape_str(xv.dims));
    if (factor < 1) throw shape_error("upsample_nearest: factor must be >= 1");
    const int len = xv.dim(0), c = xv.dim(1);
    Tensor<S> out({len * factor, c});
    for (int i = 0; i < len; ++i) {
        for (int f = 0; f < factor; ++f) {
            std::copy(xv.row(i), xv.row(i) + c, out.row(i * factor + f));
        }
    }
    auto xn = input.node();
    auto n = detail::make_node<S>(std::move(out), {xn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, xn, len, c, factor] {
            xn->ensure_grad();
            for (int i = 0; i < len; ++i) {
                S* xg = xn->grad.row(i);
                for (int f = 0; f < factor; ++f) {
                    const S* g = self->grad.row(i * factor + f);
                    for (int j = 0; j < c; ++j) xg[j] += g[j];
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

// Single-group GroupNorm on an [N x C] sample: statistics over all N*C
// elements, then per-channel affine.
template <typename S>
Var<S> groupnorm1(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps) {
    const auto& xv = x.val();
    const auto& gv = gamma.val();
    const auto& bv = beta.val();
    if (xv.rank() != 2) throw shape_error("groupnorm1: need rank-2, got " + shape_str(xv.dims));
    const int r = xv.dim(0), c = xv.dim(1);
    if (gv.rank() != 1 || gv.dim(0) != c || bv.rank() != 1 || bv.dim(0) != c) {
        throw shape_error("groupnorm1: affine params must be length " + std::to_string(c));
    }
    const std::int64_t n_el = xv.numel();
    double mu = 0;
    for (S v : xv.data) mu += static_cast<double>(v);
    mu /= static_cast<double>(n_el);
    double var = 0;
    for (S v : xv.data) {
        const double d = static_cast<double>(v) - mu;
        var += d * d;
    }
    var /= static_cast<double>(n_el);
    const double inv_sigma = 1.0 / std::sqrt(var + static_cast<double>(eps));

    auto xhat = std::make_shared<Tensor<S>>(Shape{r, c});
    Tensor<S> out({r, c});
    for (int i = 0; i < r; ++i) {
        const S* xin = xv.row(i);
        S* xh = xhat->row(i);
        S* o = out.row(i);
        for (int j = 0; j < c; ++j) {
            xh[j] = static_cast<S>((static_cast<double>(xin[j]) - mu) * inv_sigma);
            o[j] = xh[j] * gv.data[static_cast<std::size_t>(j)] + bv.data[static_cast<std::size_t>(j)];
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto n = detail::make_node<S>(std::move(out), {xn, gn, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, xn, gn, bn, xhat, inv_sigma, r, c, n_el] {
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    const S* g = self->grad.row(i);
                    const S* xh = xhat->row(i);
                    for (int j = 0; j < c; ++j)
                        gn->grad.data[static_cast<std::size_t>(j)] += g[j] * xh[j];
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    const S* g = self->grad.row(i);
                    for (int j = 0; j < c; ++j) bn->grad.data[static_cast<std::size_t>(j)] += g[j];
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                // h = g * gamma; dx = inv_sigma * (h - mean(h) - xhat * mean(h*xhat))
                double h_mean = 0, hx_mean = 0;
                for (int i = 0; i < r; ++i) {
                    const S* g = self->grad.row(i);
                    const S* xh = xhat->row(i);
                    for (int j = 0; j < c; ++j) {
                        const double h = static_cast<double>(g[j]) *
                                         static_cast<double>(gn->val.data[static_cast<std::size_t>(j)]);
                        h_mean += h;
                        hx_mean += h * static_cast<double>(xh[j]);
                    }
                }
                h_mean /= static_cast<double>(n_el);
                hx_mean /= static_cast<double>(n_el);
                for (int i = 0; i < r; ++i) {
                    const S* g = self->grad.row(i);
                    const S* xh = xhat->row(i);
                    S* xg = xn->grad.row(i);
                    for (int j = 0; j < c; ++j) {
                        const double h = static_cast<double>(g[j]) *
                                         static_cast<double>(gn->val.data[static_cast<std::size_t>(j)]);
                        xg[j] += static_cast<S>(inv_sigma *
                                                (h - h_mean - static_cast<double>(xh[j]) * hx_mean));
                    }
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

// Scale-only row normalization: y = x / rms(x) * gain.
template <typename S>
Var<S> rmsnorm_rows(const Var<S>& x, const Var<S>& gain, S eps) {
    const auto& xv = x.val();
    const auto& gv = gain.val();
    if (xv.rank() != 2 || gv.rank() != 1 || gv.dim(0) != xv.dim(1)) {
        throw shape_error("rmsnorm_rows: " + shape_str(xv.dims) + " vs gain " +
                          shape_str(gv.dims));
    }
    const int r = xv.dim(0), c = xv.dim(1);
    auto inv_rms = std::make_shared<std::vector<double>>(r);
    Tensor<S> out({r, c});
    for (int i = 0; i < r; ++i) {
        const S* xin = xv.row(i);
        double ms = 0;
        for (int j = 0; j < c; ++j) ms += static_cast<double>(xin[j]) * xin[j];
        ms = ms / c + static_cast<double>(eps);
        const double inv = 1.0 / std::sqrt(ms);
        (*inv_rms)[i] = inv;
        S* o = out.row(i);
        for (int j = 0; j < c; ++j)
            o[j] = static_cast<S>(static_cast<double>(xin[j]) * inv *
                                  static_cast<double>(gv.data[static_cast<std::size_t>(j)]));
    }
    auto xn = x.node(), gn = gain.node();
    auto n = detail::make_node<S>(std::move(out), {xn, gn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, xn, gn, inv_rms, r, c] {
            for (int i = 0; i < r; ++i) {
                const double inv = (*inv_rms)[i];
                const S* g = self->grad.row(i);
                const S* xin = xn->val.row(i);
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (int j = 0; j < c; ++j)
                        gn->grad.data[static_cast<std::size_t>(j)] +=
                            g[j] * static_cast<S>(static_cast<double>(xin[j]) * inv);
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    double hx = 0;
                    for (int j = 0; j < c; ++j) {
                        const double h = static_cast<double>(g[j]) *
                                         static_cast<double>(gn->val.data[static_cast<std::size_t>(j)]);
                        hx += h * static_cast<double>(xin[j]);
                    }
                    S* xg = xn->grad.row(i);
                    for (int j = 0; j < c; ++j) {
                        const double h = static_cast<double>(g[j]) *
                                         static_cast<double>(gn->val.data[static_cast<std::size_t>(j)]);
                        xg[j] += static_cast<S>(
                            inv * h - inv * inv * inv * static_cast<double>(xin[j]) * hx / c);
                    }
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

// Per-row layer normalization with affine.
template <typename S>
Var<S> layernorm_rows(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps) {
    const auto& xv = x.val();
    const int r = xv.dim(0), c = xv.dim(1);
    if (gamma.val().dim(0) != c || beta.val().dim(0) != c) {
        throw shape_error("layernorm_rows: affine params must be length " + std::to_string(c));
    }
    auto inv_sigma = std::make_shared<std::vector<double>>(r);
    auto xhat = std::make_shared<Tensor<S>>(Shape{r, c});
    Tensor<S> out({r, c});
    const auto& gv = gamma.val();
    const auto& bv = beta.val();
    for (int i = 0; i < r; ++i) {
        const S* xin = xv.row(i);
        double mu = 0;
        for (int j = 0; j < c; ++j) mu += static_cast<double>(xin[j]);
        mu /= c;
        double var = 0;
        for (int j = 0; j < c; ++j) {
            const double d = static_cast<double>(xin[j]) - mu;
            var += d * d;
        }
        var /= c;
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        (*inv_sigma)[i] = inv;
        S* xh = xhat->row(i);
        S* o = out.row(i);
        for (int j = 0; j < c; ++j) {
            xh[j] = static_cast<S>((static_cast<double>(xin[j]) - mu) * inv);
            o[j] = xh[j] * gv.data[static_cast<std::size_t>(j)] + bv.data[static_cast<std::size_t>(j)];
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto n = detail::make_node<S>(std::move(out), {xn, gn, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, xn, gn, bn, xhat, inv_sigma, r, c] {
            for (int i = 0; i < r; ++i) {
                const S* g = self->grad.row(i);
                const S* xh = xhat->row(i);
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (int j = 0; j < c; ++j)
                        gn->grad.data[static_cast<std::size_t>(j)] += g[j] * xh[j];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int j = 0; j < c; ++j) bn->grad.data[static_cast<std::size_t>(j)] += g[j];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    double h_mean = 0, hx_mean = 0;
                    for (int j = 0; j < c; ++j) {
                        const double h = static_cast<double>(g[j]) *
                                         static_cast<double>(gn->val.data[static_cast<std::size_t>(j)]);
                        h_mean += h;
                        hx_mean += h * static_cast<double>(xh[j]);
                    }
                    h_mean /= c;
                    hx_mean /= c;
                    S* xg = xn->grad.row(i);
                    for (int j = 0; j < c; ++j) {
                        const double h = static_cast<double>(g[j]) *
                                         static_cast<double>(gn->val.data[static_cast<std::size_t>(j)]);
                        xg[j] += static_cast<S>((*inv_sigma)[i] *
                                                (h - h_mean - static_cast<double>(xh[j]) * hx_mean));
                    }
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

// Rotary position embedding on [S_len x H x D] with positions
// pos_offset..pos_offset+S_len-1. D must be even.
template <typename S>
Var<S> rope(const Var<S>& x, double base, int pos_offset = 0) {
    const auto& xv = x.val();
    if (xv.rank() != 3) throw shape_error("rope: need rank-3, got " + shape_str(xv.dims));
    const int s_len = xv.dim(0), h = xv.dim(1), d = xv.dim(2);
    if (d % 2 != 0) throw shape_error("rope: head dim must be even, got " + std::to_string(d));
    // Precompute cos/sin per (position, pair).
    auto cs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s_len) * d);
    for (int t = 0; t < s_len; ++t) {
        for (int p = 0; p < d / 2; ++p) {
            const double theta =
                static_cast<double>(t + pos_offset) * std::pow(base, -2.0 * p / d);
            (*cs)[(static_cast<std::size_t>(t) * d / 2 + p) * 2 + 0] = std::cos(theta);
            (*cs)[(static_cast<std::size_t>(t) * d / 2 + p) * 2 + 1] = std::sin(theta);
        }
    }
    Tensor<S> out({s_len, h, d});
    for (int t = 0; t < s_len; ++t) {
        for (int hh = 0; hh < h; ++hh) {
            for (int p = 0; p < d / 2; ++p) {
                const double c = (*cs)[(static_cast<std::size_t>(t) * d / 2 + p) * 2 + 0];
                const double sn = (*cs)[(static_cast<std::size_t>(t) * d / 2 + p) * 2 + 1];
                const double x0 = static_cast<double>(xv.at(t, hh, 2 * p));
                const double x1 = static_cast<double>(xv.at(t, hh, 2 * p + 1));
                out.at(t, hh, 2 * p) = static_cast<S>(x0 * c - x1 * sn);
                out.at(t, hh, 2 * p + 1) = static_cast<S>(x0 * sn + x1 * c);
            }
        }
    }
    auto xn = x.node();
    auto n = detail::make_node<S>(std::move(out), {xn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, xn, cs, s_len, h, d] {
            xn->ensure_grad();
            for (int t = 0; t < s_len; ++t) {
                for (int hh = 0; hh < h; ++hh) {
                    for (int p = 0; p < d / 2; ++p) {
                        const double c = (*cs)[(static_cast<std::size_t>(t) * d / 2 + p) * 2 + 0];
                        const double sn = (*cs)[(static_cast<std::size_t>(t) * d / 2 + p) * 2 + 1];
                        const double g0 = static_cast<double>(self->grad.at(t, hh, 2 * p));
                        const double g1 = static_cast<double>(self->grad.at(t, hh, 2 * p + 1));
                        xn->grad.at(t, hh, 2 * p) += static_cast<S>(g0 * c + g1 * sn);
                        xn->grad.at(t, hh, 2 * p + 1) += static_cast<S>(-g0 * sn + g1 * c);
                    }
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

// Causal grouped-query attention. q: [S x H_q x D], k/v: [S x H_kv x D],
// H_q divisible by H_kv; query head h reads kv head h / (H_q / H_kv).
template <typename S>
Var<S> gqa_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v) {
    const auto& qv = q.val();
    const auto& kv = k.val();
    const auto& vv = v.val();
    if (qv.rank() != 3 || kv.rank() != 3 || vv.rank() != 3) {
        throw shape_error("gqa_attention: need rank-3 q/k/v");
    }
    const int s_len = qv.dim(0), h_q = qv.dim(1), d = qv.dim(2);
    const int h_kv = kv.dim(1);
    if (kv.dim(0) != s_len || vv.dim(0) != s_len || vv.dim(1) != h_kv || kv.dim(2) != d ||
        vv.dim(2) != d) {
        throw shape_error("gqa_attention: mismatched shapes q " + shape_str(qv.dims) + " k " +
                          shape_str(kv.dims) + " v " + shape_str(vv.dims));
    }
    if (h_q % h_kv != 0) {
        throw config_error("gqa_attention: " + std::to_string(h_q) + " query heads not divisible by " +
                           std::to_string(h_kv) + " kv heads");
    }
    const int group = h_q / h_kv;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    // Cache softmax weights per head for the backward: h_q * S * S.
    auto attn = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(h_q) * s_len * s_len, 0.0);
    Tensor<S> out({s_len, h_q, d});
    std::vector<double> scores(static_cast<std::size_t>(s_len));
    for (int hh = 0; hh < h_q; ++hh) {
        const int hk = hh / group;
        for (int i = 0; i < s_len; ++i) {
            double mx = -1e300;
            for (int j = 0; j <= i; ++j) {
                double dot = 0;
                for (int e = 0; e < d; ++e)
                    dot += static_cast<double>(qv.at(i, hh, e)) * kv.at(j, hk, e);
                scores[static_cast<std::size_t>(j)] = dot * inv_sqrt_d;
                mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
            }
            double denom = 0;
            for (int j = 0; j <= i; ++j) {
                scores[static_cast<std::size_t>(j)] = std::exp(scores[static_cast<std::size_t>(j)] - mx);
                denom += scores[static_cast<std::size_t>(j)];
            }
            double* arow = attn->data() + (static_cast<std::size_t>(hh) * s_len + i) * s_len;
            for (int j = 0; j <= i; ++j) arow[j] = scores[static_cast<std::size_t>(j)] / denom;
            for (int e = 0; e < d; ++e) {
                double acc = 0;
                for (int j = 0; j <= i; ++j) acc += arow[j] * vv.at(j, hk, e);
                out.at(i, hh, e) = static_cast<S>(acc);
            }
        }
    }
    auto qn = q.node(), kn = k.node(), vn = v.node();
    auto n = detail::make_node<S>(std::move(out), {qn, kn, vn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, qn, kn, vn, attn, s_len, h_q, h_kv, d, group, inv_sqrt_d] {
            qn->ensure_grad();
            kn->ensure_grad();
            vn->ensure_grad();
            std::vector<double> da(static_cast<std::size_t>(s_len));
            for (int hh = 0; hh < h_q; ++hh) {
                const int hk = hh / group;
                for (int i = 0; i < s_len; ++i) {
                    const double* arow =
                        attn->data() + (static_cast<std::size_t>(hh) * s_len + i) * s_len;
                    // dv and da
                    double dot = 0;
                    for (int j = 0; j <= i; ++j) {
                        double daj = 0;
                        for (int e = 0; e < d; ++e) {
                            const double go = static_cast<double>(self->grad.at(i, hh, e));
                            vn->grad.at(j, hk, e) += static_cast<S>(arow[j] * go);
                            daj += go * static_cast<double>(vn->val.at(j, hk, e));
                        }
                        da[static_cast<std::size_t>(j)] = daj;
                        dot += daj * arow[j];
                    }
                    // softmax backward, then into q and k
                    for (int j = 0; j <= i; ++j) {
                        const double ds = arow[j] * (da[static_cast<std::size_t>(j)] - dot) * inv_sqrt_d;
                        if (ds == 0.0) continue;
                        for (int e = 0; e < d; ++e) {
                            qn->grad.at(i, hh, e) +=
                                static_cast<S>(ds * static_cast<double>(kn->val.at(j, hk, e)));
                            kn->grad.at(j, hk, e) +=
                                static_cast<S>(ds * static_cast<double>(qn->val.at(i, hh, e)));
                        }
                    }
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

// Column-wise max over rows: [N x C] -> [1 x C]; ties route the gradient to
// the first maximal row.
template <typename S>
Var<S> colwise_max(const Var<S>& x) {
    const auto& xv = x.val();
    if (xv.rank() != 2) throw shape_error("colwise_max: need rank-2, got " + shape_str(xv.dims));
    const int r = xv.dim(0), c = xv.dim(1);
    auto arg = std::make_shared<std::vector<int>>(c, 0);
    Tensor<S> out({1, c});
    for (int j = 0; j < c; ++j) {
        S best = xv.at(0, j);
        int bi = 0;
        for (int i = 1; i < r; ++i) {
            if (xv.at(i, j) > best) {
                best = xv.at(i, j);
                bi = i;
            }
        }
        out.at(0, j) = best;
        (*arg)[static_cast<std::size_t>(j)] = bi;
    }
    auto xn = x.node();
    auto n = detail::make_node<S>(std::move(out), {xn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, xn, arg, c] {
            xn->ensure_grad();
            for (int j = 0; j < c; ++j)
                xn->grad.at((*arg)[static_cast<std::size_t>(j)], j) += self->grad.at(0, j);
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> colwise_mean(const Var<S>& x) {
    const auto& xv = x.val();
    if (xv.rank() != 2) throw shape_error("colwise_mean: need rank-2, got " + shape_str(xv.dims));
    const int r = xv.dim(0), c = xv.dim(1);
    Tensor<S> out({1, c});
    for (int j = 0; j < c; ++j) {
        double acc = 0;
        for (int i = 0; i < r; ++i) acc += static_cast<double>(xv.at(i, j));
        out.at(0, j) = static_cast<S>(acc / r);
    }
    auto xn = x.node();
    auto n = detail::make_node<S>(std::move(out), {xn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, xn, r, c] {
            xn->ensure_grad();
            for (int j = 0; j < c; ++j) {
                const S g = self->grad.at(0, j) / static_cast<S>(r);
                for (int i = 0; i < r; ++i) xn->grad.at(i, j) += g;
            }
        };
    }
    return Var<S>::wrap(n);
}

// Row gather: out[i] = table[ids[i]]; backward scatter-adds.
template <typename S>
Var<S> gather_rows(const Var<S>& table, const std::vector<int>& ids) {
    const auto& tv = table.val();
    if (tv.rank() != 2) throw shape_error("gather_rows: need rank-2 table");
    const int rows = tv.dim(0), d = tv.dim(1);
    Tensor<S> out({static_cast<int>(ids.size()), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id < 0 || id >= rows) {
            throw range_error("gather_rows: index " + std::to_string(id) + " outside table of " +
                              std::to_string(rows));
        }
        std::copy(tv.row(id), tv.row(id) + d, out.row(static_cast<int>(i)));
    }
    auto tn = table.node();
    auto n = detail::make_node<S>(std::move(out), {tn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, tn, ids, d] {
            tn->ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const S* g = self->grad.row(static_cast<int>(i));
                S* row = tn->grad.row(ids[i]);
                for (int j = 0; j < d; ++j) row[j] += g[j];
            }
        };
    }
    return Var<S>::wrap(n);
}

// Embedding lookup over two stacked tables (rows [0, split) in `low`, rows
// [split, split+high_rows) in `high`), with an optional row replaced by an
// injected feature vector. Gradients scatter-add into the owning table; the
// injected row's gradient flows to `feature`.
template <typename S>
Var<S> embed_rows(const Var<S>& low, const Var<S>& high, const std::vector<int>& ids,
                  int inject_pos = -1, const Var<S>& feature = {}) {
    const auto& lo = low.val();
    const auto& hi = high.val();
    if (lo.rank() != 2 || hi.rank() != 2 || lo.dim(1) != hi.dim(1)) {
        throw shape_error("embed_rows: table shapes " + shape_str(lo.dims) + " vs " +
                          shape_str(hi.dims));
    }
    const int split = lo.dim(0);
    const int total = split + hi.dim(0);
    const int d = lo.dim(1);
    const int s_len = static_cast<int>(ids.size());
    if (inject_pos >= 0) {
        if (!feature.defined() || feature.val().numel() != d) {
            throw domain_error("embed_rows: injection requested without a feature of width " +
                               std::to_string(d));
        }
        if (inject_pos >= s_len) throw range_error("embed_rows: inject position out of range");
    }
    Tensor<S> out({s_len, d});
    for (int t = 0; t < s_len; ++t) {
        if (t == inject_pos) {
            std::copy(feature.val().data.begin(), feature.val().data.end(), out.row(t));
            continue;
        }
        const int id = ids[static_cast<std::size_t>(t)];
        if (id < 0 || id >= total) {
            throw range_error("embed_rows: token id " + std::to_string(id) + " outside vocab of " +
                              std::to_string(total));
        }
        const S* src = id < split ? lo.row(id) : hi.row(id - split);
        std::copy(src, src + d, out.row(t));
    }
    auto ln = low.node(), hn = high.node();
    std::vector<std::shared_ptr<Node<S>>> parents{ln, hn};
    std::shared_ptr<Node<S>> fn;
    if (inject_pos >= 0) {
        fn = feature.node();
        parents.push_back(fn);
    }
    auto n = detail::make_node<S>(std::move(out), std::move(parents), {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, ln, hn, fn, ids, inject_pos, split, d, s_len] {
            for (int t = 0; t < s_len; ++t) {
                const S* g = self->grad.row(t);
                if (t == inject_pos) {
                    if (fn && fn->requires_grad) {
                        fn->ensure_grad();
                        for (int j = 0; j < d; ++j) fn->grad.data[static_cast<std::size_t>(j)] += g[j];
                    }
                    continue;
                }
                const int id = ids[static_cast<std::size_t>(t)];
                if (id < split) {
                    if (ln->requires_grad) {
                        ln->ensure_grad();
                        S* row = ln->grad.row(id);
                        for (int j = 0; j < d; ++j) row[j] += g[j];
                    }
                } else if (hn->requires_grad) {
                    hn->ensure_grad();
                    S* row = hn->grad.row(id - split);
                    for (int j = 0; j < d; ++j) row[j] += g[j];
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

}  // namespace hoi
