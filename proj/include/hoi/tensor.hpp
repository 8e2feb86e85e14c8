#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "hoi/error.hpp"

namespace hoi {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& dims) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << "x";
        os << dims[i];
    }
    os << "]";
    return os.str();
}

inline std::int64_t shape_numel(const Shape& dims) {
    std::int64_t n = 1;
    for (int d : dims) n *= d;
    return n;
}

// Dense row-major tensor. 32-bit scalars are the pipeline default; the
// 64-bit instantiation backs gradient checking.
template <typename S>
struct Tensor {
    Shape dims;
    std::vector<S> data;

    Tensor() = default;

    explicit Tensor(Shape d, S fill = S(0)) : dims(std::move(d)) {
        for (int e : dims) {
            if (e <= 0) throw shape_error("non-positive extent in shape " + shape_str(dims));
        }
        data.assign(static_cast<std::size_t>(shape_numel(dims)), fill);
    }

    Tensor(Shape d, std::vector<S> values) : dims(std::move(d)), data(std::move(values)) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(dims)) {
            throw shape_error("data length " + std::to_string(data.size()) +
                              " does not match shape " + shape_str(dims));
        }
    }

    static Tensor zeros(Shape d) { return Tensor(std::move(d)); }

    static Tensor full(Shape d, S v) { return Tensor(std::move(d), v); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(dims.size()); }

    int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }

    bool same_dims(const Tensor& o) const { return dims == o.dims; }

    S& at(int i) { return data[static_cast<std::size_t>(i)]; }
    S at(int i) const { return data[static_cast<std::size_t>(i)]; }

    S& at(int i, int j) { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
    S at(int i, int j) const { return data[static_cast<std::size_t>(i) * dim(1) + j]; }

    S& at(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    S at(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    S* row(int i) { return data.data() + static_cast<std::size_t>(i) * dim(1); }
    const S* row(int i) const { return data.data() + static_cast<std::size_t>(i) * dim(1); }

    bool all_finite() const {
        for (S v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> out;
        out.dims = dims;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }
};

template <typename S>
void require_same_dims(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (!a.same_dims(b)) {
        throw shape_error(std::string(op) + ": mismatched shapes " + shape_str(a.dims) +
                          " vs " + shape_str(b.dims));
    }
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace hoi
