#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hoi/tensor.hpp"

namespace hoi {

// Central-difference gradient estimate of a scalar function. The point of
// this op is to stay independent of the tape so it can arbitrate it.
template <typename S>
Tensor<S> finite_diff_grad(const std::function<S(const Tensor<S>&)>& f, const Tensor<S>& x,
                           S h) {
    Tensor<S> g = Tensor<S>::zeros(x.dims);
    Tensor<S> probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const S orig = probe.data[i];
        probe.data[i] = orig + h;
        const S f_plus = f(probe);
        probe.data[i] = orig - h;
        const S f_minus = f(probe);
        probe.data[i] = orig;
        if (!std::isfinite(static_cast<double>(f_plus)) ||
            !std::isfinite(static_cast<double>(f_minus))) {
            throw oracle_error("finite_diff_grad: non-finite function value at component " +
                               std::to_string(i));
        }
        g.data[i] = (f_plus - f_minus) / (S(2) * h);
    }
    return g;
}

// Same estimate restricted to chosen components; used where the full sweep
// would be too slow (whole-model checks).
template <typename S>
std::vector<S> finite_diff_grad_at(const std::function<S(const Tensor<S>&)>& f,
                                   const Tensor<S>& x, S h, const std::vector<std::size_t>& idx) {
    std::vector<S> g;
    g.reserve(idx.size());
    Tensor<S> probe = x;
    for (std::size_t i : idx) {
        const S orig = probe.data[i];
        probe.data[i] = orig + h;
        const S f_plus = f(probe);
        probe.data[i] = orig - h;
        const S f_minus = f(probe);
        probe.data[i] = orig;
        if (!std::isfinite(static_cast<double>(f_plus)) ||
            !std::isfinite(static_cast<double>(f_minus))) {
            throw oracle_error("finite_diff_grad: non-finite function value at component " +
                               std::to_string(i));
        }
        g.push_back((f_plus - f_minus) / (S(2) * h));
    }
    return g;
}

// Relative error between two gradients, max over components; the comparison
// used by every gradient-contract test.
template <typename S>
double grad_rel_error(const std::vector<S>& analytic, const std::vector<S>& numeric,
                      double floor = 1e-6) {
    double worst = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = static_cast<double>(analytic[i]);
        const double n = static_cast<double>(numeric[i]);
        const double denom = std::max({std::abs(a), std::abs(n), floor});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

template <typename S>
double grad_rel_error(const Tensor<S>& analytic, const Tensor<S>& numeric, double floor = 1e-6) {
    return grad_rel_error(analytic.data, numeric.data, floor);
}

}  // namespace hoi
