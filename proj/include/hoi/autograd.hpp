#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hoi/tensor.hpp"

namespace hoi {

// Reverse-mode tape. Ops build a DAG of shared nodes; backward() runs the
// recorded closures in reverse topological order. Nodes that cannot reach a
// gradient-requiring leaf skip both grad allocation and closure execution.
template <typename S>
struct Node {
    Tensor<S> val;
    Tensor<S> grad;  // allocated on demand, same dims as val
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;  // accumulates this->grad into parents

    void ensure_grad() {
        if (grad.data.empty()) grad = Tensor<S>::zeros(val.dims);
    }
};

template <typename S>
class Var {
public:
    Var() = default;

    explicit Var(Tensor<S> v, bool requires_grad = false)
        : node_(std::make_shared<Node<S>>()) {
        node_->val = std::move(v);
        node_->requires_grad = requires_grad;
        if (requires_grad) node_->ensure_grad();
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor<S>& val() const { return node_->val; }
    Tensor<S>& mutable_val() { return node_->val; }
    Tensor<S>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void zero_grad() {
        if (node_) {
            node_->ensure_grad();
            std::fill(node_->grad.data.begin(), node_->grad.data.end(), S(0));
        }
    }

    std::shared_ptr<Node<S>> node() const { return node_; }

    static Var wrap(std::shared_ptr<Node<S>> n) {
        Var v;
        v.node_ = std::move(n);
        return v;
    }

private:
    std::shared_ptr<Node<S>> node_;
};

namespace detail {

template <typename S>
std::shared_ptr<Node<S>> make_node(Tensor<S> val, std::vector<std::shared_ptr<Node<S>>> parents,
                                   std::function<void()> backprop) {
    auto n = std::make_shared<Node<S>>();
    n->val = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p && p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    if (n->requires_grad) {
        n->ensure_grad();
        n->backprop = std::move(backprop);
    }
    return n;
}

}  // namespace detail

template <typename S>
Var<S> constant(Tensor<S> v) {
    return Var<S>(std::move(v), false);
}

template <typename S>
Var<S> scalar(S v) {
    return Var<S>(Tensor<S>({1}, std::vector<S>{v}), false);
}

// Runs reverse-mode accumulation from a scalar root.
template <typename S>
void backward(const Var<S>& root) {
    if (!root.defined()) throw domain_error("backward on undefined var");
    if (root.val().numel() != 1) {
        throw shape_error("backward root must be scalar, got " + shape_str(root.val().dims));
    }
    auto* r = root.node().get();
    if (!r->requires_grad) return;

    // Iterative post-order topological sort.
    std::vector<Node<S>*> topo;
    std::unordered_set<Node<S>*> seen;
    std::vector<std::pair<Node<S>*, std::size_t>> stack;
    stack.emplace_back(r, 0);
    seen.insert(r);
    while (!stack.empty()) {
        auto& [n, next_child] = stack.back();
        if (next_child < n->parents.size()) {
            Node<S>* p = n->parents[next_child++].get();
            if (p && p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(n);
            stack.pop_back();
        }
    }

    r->ensure_grad();
    r->grad.data[0] = S(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop();
    }
}

// ---------------------------------------------------------------------------
// elementwise / linear-algebra ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
    require_same_dims(a.val(), b.val(), "add");
    Tensor<S> out = a.val();
    const auto& bv = b.val().data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv[i];
    auto an = a.node(), bn = b.node();
    auto n = detail::make_node<S>(std::move(out), {an, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, bn] {
            const auto& g = self->grad.data;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) an->grad.data[i] += g[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) bn->grad.data[i] += g[i];
            }
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
    require_same_dims(a.val(), b.val(), "sub");
    Tensor<S> out = a.val();
    const auto& bv = b.val().data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv[i];
    auto an = a.node(), bn = b.node();
    auto n = detail::make_node<S>(std::move(out), {an, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, bn] {
            const auto& g = self->grad.data;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) an->grad.data[i] += g[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) bn->grad.data[i] -= g[i];
            }
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
    require_same_dims(a.val(), b.val(), "mul");
    Tensor<S> out = a.val();
    const auto& bv = b.val().data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv[i];
    auto an = a.node(), bn = b.node();
    auto n = detail::make_node<S>(std::move(out), {an, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, bn] {
            const auto& g = self->grad.data;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i)
                    an->grad.data[i] += g[i] * bn->val.data[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i)
                    bn->grad.data[i] += g[i] * an->val.data[i];
            }
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> scale(const Var<S>& a, S c) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) v *= c;
    auto an = a.node();
    auto n = detail::make_node<S>(std::move(out), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, c] {
            an->ensure_grad();
            const auto& g = self->grad.data;
            for (std::size_t i = 0; i < g.size(); ++i) an->grad.data[i] += g[i] * c;
        };
    }
    return Var<S>::wrap(n);
}

// a[m x k] * b[k x n] -> [m x n]
template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
    const auto& av = a.val();
    const auto& bv = b.val();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw shape_error("matmul: incompatible shapes " + shape_str(av.dims) + " vs " +
                          shape_str(bv.dims));
    }
    const int m = av.dim(0), k = av.dim(1), nn = bv.dim(1);
    Tensor<S> out({m, nn});
    for (int i = 0; i < m; ++i) {
        const S* arow = av.row(i);
        S* orow = out.row(i);
        for (int p = 0; p < k; ++p) {
            const S apk = arow[p];
            if (apk == S(0)) continue;
            const S* brow = bv.row(p);
            for (int j = 0; j < nn; ++j) orow[j] += apk * brow[j];
        }
    }
    auto an = a.node(), bn = b.node();
    auto n = detail::make_node<S>(std::move(out), {an, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, bn, m, k, nn] {
            const Tensor<S>& g = self->grad;
            if (an->requires_grad) {
                an->ensure_grad();
                // dA = G * B^T
                for (int i = 0; i < m; ++i) {
                    const S* grow = g.row(i);
                    S* arow = an->grad.row(i);
                    for (int p = 0; p < k; ++p) {
                        const S* brow = bn->val.row(p);
                        S acc = 0;
                        for (int j = 0; j < nn; ++j) acc += grow[j] * brow[j];
                        arow[p] += acc;
                    }
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                // dB = A^T * G
                for (int i = 0; i < m; ++i) {
                    const S* arow = an->val.row(i);
                    const S* grow = g.row(i);
                    for (int p = 0; p < k; ++p) {
                        const S apk = arow[p];
                        if (apk == S(0)) continue;
                        S* brow = bn->grad.row(p);
                        for (int j = 0; j < nn; ++j) brow[j] += apk * grow[j];
                    }
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> transpose(const Var<S>& a) {
    const auto& av = a.val();
    if (av.rank() != 2) throw shape_error("transpose: need rank-2, got " + shape_str(av.dims));
    const int m = av.dim(0), n2 = av.dim(1);
    Tensor<S> out({n2, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n2; ++j) out.at(j, i) = av.at(i, j);
    auto an = a.node();
    auto n = detail::make_node<S>(std::move(out), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, m, n2] {
            an->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n2; ++j) an->grad.at(i, j) += self->grad.at(j, i);
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> reshape(const Var<S>& a, Shape dims) {
    if (shape_numel(dims) != a.val().numel()) {
        throw shape_error("reshape: " + shape_str(a.val().dims) + " -> " + shape_str(dims) +
                          " changes element count");
    }
    Tensor<S> out(dims, a.val().data);
    auto an = a.node();
    auto n = detail::make_node<S>(std::move(out), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an] {
            an->ensure_grad();
            for (std::size_t i = 0; i < self->grad.data.size(); ++i)
                an->grad.data[i] += self->grad.data[i];
        };
    }
    return Var<S>::wrap(n);
}

// Vertical stack of two matrices with equal column counts.
template <typename S>
Var<S> concat_rows(const Var<S>& a, const Var<S>& b) {
    const auto& av = a.val();
    const auto& bv = b.val();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
        throw shape_error("concat_rows: incompatible " + shape_str(av.dims) + " vs " +
                          shape_str(bv.dims));
    }
    Tensor<S> out({av.dim(0) + bv.dim(0), av.dim(1)});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.data.size());
    auto an = a.node(), bn = b.node();
    auto n = detail::make_node<S>(std::move(out), {an, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        const std::size_t asz = av.data.size();
        self->backprop = [self, an, bn, asz] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < asz; ++i) an->grad.data[i] += self->grad.data[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = asz; i < self->grad.data.size(); ++i)
                    bn->grad.data[i - asz] += self->grad.data[i];
            }
        };
    }
    return Var<S>::wrap(n);
}

// Rows [start, end) of a matrix.
template <typename S>
Var<S> slice_rows(const Var<S>& a, int start, int end) {
    const auto& av = a.val();
    if (av.rank() != 2 || start < 0 || end > av.dim(0) || start >= end) {
        throw shape_error("slice_rows: invalid range [" + std::to_string(start) + ", " +
                          std::to_string(end) + ") for " + shape_str(av.dims));
    }
    const int c = av.dim(1);
    Tensor<S> out({end - start, c});
    std::copy(av.row(start), av.row(end - 1) + c, out.data.begin());
    auto an = a.node();
    auto n = detail::make_node<S>(std::move(out), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, start, c] {
            an->ensure_grad();
            const int rows = self->grad.dim(0);
            for (int i = 0; i < rows; ++i) {
                const S* g = self->grad.row(i);
                S* ag = an->grad.row(start + i);
                for (int j = 0; j < c; ++j) ag[j] += g[j];
            }
        };
    }
    return Var<S>::wrap(n);
}

// Horizontal concat of two matrices with equal row counts.
template <typename S>
Var<S> concat_cols(const Var<S>& a, const Var<S>& b) {
    const auto& av = a.val();
    const auto& bv = b.val();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0)) {
        throw shape_error("concat_cols: incompatible " + shape_str(av.dims) + " vs " +
                          shape_str(bv.dims));
    }
    const int r = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
    Tensor<S> out({r, ca + cb});
    for (int i = 0; i < r; ++i) {
        std::copy(av.row(i), av.row(i) + ca, out.row(i));
        std::copy(bv.row(i), bv.row(i) + cb, out.row(i) + ca);
    }
    auto an = a.node(), bn = b.node();
    auto n = detail::make_node<S>(std::move(out), {an, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, bn, r, ca, cb] {
            for (int i = 0; i < r; ++i) {
                const S* grow = self->grad.row(i);
                if (an->requires_grad) {
                    an->ensure_grad();
                    for (int j = 0; j < ca; ++j) an->grad.row(i)[j] += grow[j];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int j = 0; j < cb; ++j) bn->grad.row(i)[j] += grow[ca + j];
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> relu(const Var<S>& a) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) v = v > S(0) ? v : S(0);
    auto an = a.node();
    auto n = detail::make_node<S>(std::move(out), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an] {
            an->ensure_grad();
            for (std::size_t i = 0; i < self->grad.data.size(); ++i) {
                if (an->val.data[i] > S(0)) an->grad.data[i] += self->grad.data[i];
            }
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> silu(const Var<S>& a) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) {
        const double x = static_cast<double>(v);
        v = static_cast<S>(x / (1.0 + std::exp(-x)));
    }
    auto an = a.node();
    auto n = detail::make_node<S>(std::move(out), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an] {
            an->ensure_grad();
            for (std::size_t i = 0; i < self->grad.data.size(); ++i) {
                const double x = static_cast<double>(an->val.data[i]);
                const double sig = 1.0 / (1.0 + std::exp(-x));
                const double d = sig * (1.0 + x * (1.0 - sig));
                an->grad.data[i] += self->grad.data[i] * static_cast<S>(d);
            }
        };
    }
    return Var<S>::wrap(n);
}

// tanh-approximation GELU.
template <typename S>
Var<S> gelu(const Var<S>& a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    Tensor<S> out = a.val();
    for (auto& v : out.data) {
        const double x = static_cast<double>(v);
        v = static_cast<S>(0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x))));
    }
    auto an = a.node();
    auto n = detail::make_node<S>(std::move(out), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an] {
            an->ensure_grad();
            for (std::size_t i = 0; i < self->grad.data.size(); ++i) {
                const double x = static_cast<double>(an->val.data[i]);
                const double u = kC * (x + 0.044715 * x * x * x);
                const double t = std::tanh(u);
                const double du = kC * (1.0 + 3.0 * 0.044715 * x * x);
                const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                an->grad.data[i] += self->grad.data[i] * static_cast<S>(d);
            }
        };
    }
    return Var<S>::wrap(n);
}

// Row-wise softmax with max-subtraction.
template <typename S>
Var<S> softmax_rows(const Var<S>& a) {
    const auto& av = a.val();
    if (av.rank() != 2) throw shape_error("softmax_rows: need rank-2, got " + shape_str(av.dims));
    const int r = av.dim(0), c = av.dim(1);
    Tensor<S> out({r, c});
    for (int i = 0; i < r; ++i) {
        const S* in = av.row(i);
        S* o = out.row(i);
        S mx = in[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, in[j]);
        double denom = 0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(static_cast<double>(in[j] - mx));
            o[j] = static_cast<S>(e);
            denom += e;
        }
        const S inv = static_cast<S>(1.0 / denom);
        for (int j = 0; j < c; ++j) o[j] *= inv;
    }
    auto an = a.node();
    auto n = detail::make_node<S>(std::move(out), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, r, c] {
            an->ensure_grad();
            for (int i = 0; i < r; ++i) {
                const S* y = self->val.row(i);
                const S* g = self->grad.row(i);
                double dot = 0;
                for (int j = 0; j < c; ++j) dot += static_cast<double>(g[j]) * y[j];
                S* ag = an->grad.row(i);
                for (int j = 0; j < c; ++j)
                    ag[j] += y[j] * (g[j] - static_cast<S>(dot));
            }
        };
    }
    return Var<S>::wrap(n);
}

// Mean of -log softmax(target) over the rows where mask is true.
// With an empty mask vector every row counts.
template <typename S>
Var<S> cross_entropy_from_logits(const Var<S>& logits, const std::vector<int>& targets,
                                 const std::vector<char>& mask = {}) {
    const auto& lv = logits.val();
    if (lv.rank() != 2) {
        throw shape_error("cross_entropy_from_logits: need rank-2 logits, got " +
                          shape_str(lv.dims));
    }
    const int r = lv.dim(0), c = lv.dim(1);
    if (static_cast<int>(targets.size()) != r) {
        throw shape_error("cross_entropy_from_logits: " + std::to_string(targets.size()) +
                          " targets for " + std::to_string(r) + " rows");
    }
    if (!mask.empty() && static_cast<int>(mask.size()) != r) {
        throw shape_error("cross_entropy_from_logits: mask length mismatch");
    }
    int active = 0;
    for (int i = 0; i < r; ++i) {
        if (mask.empty() || mask[i]) {
            if (targets[i] < 0 || targets[i] >= c) {
                throw range_error("cross_entropy_from_logits: target " +
                                  std::to_string(targets[i]) + " outside vocab of " +
                                  std::to_string(c));
            }
            ++active;
        }
    }
    if (active == 0) throw domain_error("cross_entropy_from_logits: empty mask");

    // Cache row log-sum-exp for the backward pass.
    auto lse = std::make_shared<std::vector<double>>(r, 0.0);
    double loss = 0;
    for (int i = 0; i < r; ++i) {
        if (!(mask.empty() || mask[i])) continue;
        const S* in = lv.row(i);
        S mx = in[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, in[j]);
        double denom = 0;
        for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(in[j] - mx));
        (*lse)[i] = static_cast<double>(mx) + std::log(denom);
        loss += (*lse)[i] - static_cast<double>(in[targets[i]]);
    }
    Tensor<S> out({1}, std::vector<S>{static_cast<S>(loss / active)});
    auto ln = logits.node();
    auto n = detail::make_node<S>(std::move(out), {ln}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, ln, targets, mask, lse, r, c, active] {
            ln->ensure_grad();
            const S g = self->grad.data[0] / static_cast<S>(active);
            for (int i = 0; i < r; ++i) {
                if (!(mask.empty() || mask[i])) continue;
                const S* in = ln->val.row(i);
                S* lg = ln->grad.row(i);
                for (int j = 0; j < c; ++j) {
                    const double p = std::exp(static_cast<double>(in[j]) - (*lse)[i]);
                    lg[j] += g * static_cast<S>(p);
                }
                lg[targets[i]] -= g;
            }
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> mse(const Var<S>& a, const Var<S>& b) {
    require_same_dims(a.val(), b.val(), "mse");
    const auto& av = a.val().data;
    const auto& bv = b.val().data;
    double acc = 0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        acc += d * d;
    }
    const std::size_t n_el = av.size();
    Tensor<S> out({1}, std::vector<S>{static_cast<S>(acc / n_el)});
    auto an = a.node(), bn = b.node();
    auto n = detail::make_node<S>(std::move(out), {an, bn}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, bn, n_el] {
            const S g = self->grad.data[0] * S(2) / static_cast<S>(n_el);
            for (std::size_t i = 0; i < n_el; ++i) {
                const S d = an->val.data[i] - bn->val.data[i];
                if (an->requires_grad) {
                    an->ensure_grad();
                    an->grad.data[i] += g * d;
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    bn->grad.data[i] -= g * d;
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> sum(const Var<S>& a) {
    double acc = 0;
    for (S v : a.val().data) acc += static_cast<double>(v);
    Tensor<S> out({1}, std::vector<S>{static_cast<S>(acc)});
    auto an = a.node();
    auto n = detail::make_node<S>(std::move(out), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an] {
            an->ensure_grad();
            const S g = self->grad.data[0];
            for (auto& v : an->grad.data) v += g;
        };
    }
    return Var<S>::wrap(n);
}

template <typename S>
Var<S> mean(const Var<S>& a) {
    return scale(sum(a), static_cast<S>(1.0 / static_cast<double>(a.val().numel())));
}

// out[i] = x[i+1] - x[i]; the frame-difference used by velocity losses.
template <typename S>
Var<S> diff_rows(const Var<S>& a) {
    const auto& av = a.val();
    if (av.rank() != 2 || av.dim(0) < 2) {
        throw shape_error("diff_rows: need at least 2 rows, got " + shape_str(av.dims));
    }
    const int r = av.dim(0), c = av.dim(1);
    Tensor<S> out({r - 1, c});
    for (int i = 0; i + 1 < r; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) = av.at(i + 1, j) - av.at(i, j);
    auto an = a.node();
    auto n = detail::make_node<S>(std::move(out), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an, r, c] {
            an->ensure_grad();
            for (int i = 0; i + 1 < r; ++i) {
                for (int j = 0; j < c; ++j) {
                    const S g = self->grad.at(i, j);
                    an->grad.at(i + 1, j) += g;
                    an->grad.at(i, j) -= g;
                }
            }
        };
    }
    return Var<S>::wrap(n);
}

// Forward emits `quantized` while the backward treats the op as identity on
// `latents` (the straight-through estimator).
template <typename S>
Var<S> straight_through(const Var<S>& latents, const Tensor<S>& quantized) {
    require_same_dims(latents.val(), quantized, "straight_through");
    auto an = latents.node();
    auto n = detail::make_node<S>(Tensor<S>(quantized), {an}, {});
    auto* self = n.get();
    if (self->requires_grad) {
        self->backprop = [self, an] {
            an->ensure_grad();
            for (std::size_t i = 0; i < self->grad.data.size(); ++i)
                an->grad.data[i] += self->grad.data[i];
        };
    }
    return Var<S>::wrap(n);
}

}  // namespace hoi
