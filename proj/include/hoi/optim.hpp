#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "hoi/autograd.hpp"

namespace hoi {

// Named trainable leaf. `trainable` lets adapters freeze the backbone while
// leaving the graph wiring untouched.
template <typename S>
struct Param {
    Var<S> var;
    std::string name;
    bool trainable = true;

    Param() = default;
    Param(Tensor<S> value, std::string n)
        : var(std::move(value), true), name(std::move(n)) {}

    const Tensor<S>& value() const { return var.val(); }
    Tensor<S>& value() { return var.mutable_val(); }
    Tensor<S>& grad() { return var.grad(); }
};

template <typename S>
void zero_grads(std::vector<Param<S>*>& params) {
    for (auto* p : params) p->var.zero_grad();
}

// Decoupled-weight-decay Adam with bias-corrected moments. Moment state is
// keyed by parameter name; all parameters in a group share the step counter.
template <typename S>
class AdamW {
public:
    struct Options {
        S lr = S(1e-3);
        S beta1 = S(0.9);
        S beta2 = S(0.999);
        S eps = S(1e-8);
        S weight_decay = S(0.01);
    };

    struct State {
        Tensor<S> m;
        Tensor<S> v;
        long step = 0;
    };

    explicit AdamW(Options opts) : opts_(opts) {}

    Options& options() { return opts_; }

    void step(const std::vector<Param<S>*>& params) {
        for (auto* p : params) {
            if (!p->trainable) continue;
            auto& st = states_[p->name];
            if (st.m.data.empty()) {
                st.m = Tensor<S>::zeros(p->value().dims);
                st.v = Tensor<S>::zeros(p->value().dims);
            }
            ++st.step;
            const auto& g = p->grad();
            if (!g.all_finite()) {
                throw train_error("non-finite gradient in parameter '" + p->name + "'");
            }
            const double bc1 = 1.0 - std::pow(static_cast<double>(opts_.beta1), st.step);
            const double bc2 = 1.0 - std::pow(static_cast<double>(opts_.beta2), st.step);
            auto& theta = p->value();
            for (std::size_t i = 0; i < theta.data.size(); ++i) {
                const double gi = static_cast<double>(g.data[i]);
                const double m = static_cast<double>(opts_.beta1) * st.m.data[i] +
                                 (1.0 - static_cast<double>(opts_.beta1)) * gi;
                const double v = static_cast<double>(opts_.beta2) * st.v.data[i] +
                                 (1.0 - static_cast<double>(opts_.beta2)) * gi * gi;
                st.m.data[i] = static_cast<S>(m);
                st.v.data[i] = static_cast<S>(v);
                const double m_hat = m / bc1;
                const double v_hat = v / bc2;
                const double upd = m_hat / (std::sqrt(v_hat) + static_cast<double>(opts_.eps)) +
                                   static_cast<double>(opts_.weight_decay) *
                                       static_cast<double>(theta.data[i]);
                theta.data[i] -= static_cast<S>(static_cast<double>(opts_.lr) * upd);
            }
        }
    }

    void reset() { states_.clear(); }

private:
    Options opts_;
    std::unordered_map<std::string, State> states_;
};

}  // namespace hoi
