#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hoi/layers.hpp"
#include "hoi/motion.hpp"
#include "hoi/optim.hpp"
#include "hoi/rng.hpp"

namespace hoi {

// Point-cloud feature extractor: three shared per-point linear maps
// (kernel-size-1 convolutions) 3 -> 64 -> 128 -> 256, each followed by
// single-group GroupNorm and ReLU; symmetric max+mean pooling over points
// concatenated to 512; then a three-layer MLP to d_model with GroupNorm+ReLU
// after the first two layers.
struct GeomEncoderConfig {
    std::vector<int> conv_widths{64, 128, 256};
    std::vector<int> mlp_hidden{128, 128};  // paper scale: {2048, 4096}
    int d_model = 64;                       // paper scale: 4096
    double eps = 1e-5;

    int pooled_width() const { return 2 * conv_widths.back(); }

    void validate() const {
        if (conv_widths.size() != 3) throw config_error("geom encoder expects 3 conv widths");
        if (mlp_hidden.size() != 2) throw config_error("geom encoder expects 2 MLP hidden widths");
        if (d_model < 1) throw config_error("geom encoder output width must be positive");
    }

    // Closed-form parameter count (weights + biases + GroupNorm affines).
    std::int64_t param_count() const {
        std::int64_t total = 0;
        int prev = 3;
        for (int w : conv_widths) {
            total += static_cast<std::int64_t>(prev) * w + w;  // linear
            total += 2 * w;                                    // groupnorm affine
            prev = w;
        }
        prev = pooled_width();
        const std::vector<int> mlp{mlp_hidden[0], mlp_hidden[1], d_model};
        for (std::size_t i = 0; i < mlp.size(); ++i) {
            total += static_cast<std::int64_t>(prev) * mlp[i] + mlp[i];
            if (i + 1 < mlp.size()) total += 2 * mlp[i];  // groupnorm after first two layers
            prev = mlp[i];
        }
        return total;
    }
};

template <typename S>
class GeomEncoder {
public:
    GeomEncoderConfig config;

    GeomEncoder() = default;

    GeomEncoder(GeomEncoderConfig cfg, std::uint64_t seed, std::string prefix = "geom.")
        : config(cfg), prefix_(std::move(prefix)) {
        config.validate();
        Rng rng = Rng::derive(seed, 0x9e00);
        int prev = 3;
        for (std::size_t i = 0; i < config.conv_widths.size(); ++i) {
            const int w = config.conv_widths[i];
            add_linear(rng, "conv" + std::to_string(i), prev, w);
            add_affine("gn_conv" + std::to_string(i), w);
            prev = w;
        }
        prev = config.pooled_width();
        const std::vector<int> mlp{config.mlp_hidden[0], config.mlp_hidden[1], config.d_model};
        for (std::size_t i = 0; i < mlp.size(); ++i) {
            add_linear(rng, "mlp" + std::to_string(i), prev, mlp[i]);
            if (i + 1 < mlp.size()) add_affine("gn_mlp" + std::to_string(i), mlp[i]);
            prev = mlp[i];
        }
    }

    std::vector<Param<S>*> params() {
        std::vector<Param<S>*> out;
        for (auto& p : params_) out.push_back(&p);
        return out;
    }

    Param<S>& param(const std::string& short_name) {
        const std::string full = prefix_ + short_name;
        for (auto& p : params_) {
            if (p.name == full) return p;
        }
        throw domain_error("geom encoder has no parameter '" + full + "'");
    }

    // points: N x 3 -> 1 x d_model feature, graph-attached.
    Var<S> encode_graph(const Var<S>& points) {
        const auto& pv = points.val();
        if (pv.rank() != 2 || pv.dim(1) != 3) {
            throw shape_error("geom encoder expects N x 3 points, got " + shape_str(pv.dims));
        }
        if (pv.dim(0) < 1) throw domain_error("geom encoder: empty point cloud");
        Var<S> h = points;
        for (std::size_t i = 0; i < config.conv_widths.size(); ++i) {
            const std::string id = std::to_string(i);
            h = add_bias(matmul(h, transpose(param("conv" + id).var)),
                         param("conv" + id + "_bias").var);
            h = groupnorm1(h, param("gn_conv" + id).var, param("gn_conv" + id + "_beta").var,
                           static_cast<S>(config.eps));
            h = relu(h);
        }
        Var<S> pooled = concat_cols(colwise_max(h), colwise_mean(h));
        Var<S> f = pooled;
        for (int i = 0; i < 3; ++i) {
            const std::string id = std::to_string(i);
            f = add_bias(matmul(f, transpose(param("mlp" + id).var)),
                         param("mlp" + id + "_bias").var);
            if (i < 2) {
                f = groupnorm1(f, param("gn_mlp" + id).var, param("gn_mlp" + id + "_beta").var,
                               static_cast<S>(config.eps));
                f = relu(f);
            }
        }
        return f;
    }

    Var<S> encode_points(const ObjectPointCloud& cloud) {
        if (cloud.count() < 1) throw domain_error("geom encoder: empty point cloud");
        Tensor<S> pts({cloud.count(), 3});
        for (std::size_t i = 0; i < pts.data.size(); ++i)
            pts.data[i] = static_cast<S>(cloud.points.data[i]);
        Var<S> in = constant(std::move(pts));
        return encode_graph(in);
    }

private:
    void add_linear(Rng& rng, const std::string& name, int in, int out) {
        Tensor<S> w({out, in});
        const double std_dev = std::sqrt(2.0 / in);
        for (auto& v : w.data) v = static_cast<S>(rng.gaussian() * std_dev);
        params_.emplace_back(std::move(w), prefix_ + name);
        params_.emplace_back(Tensor<S>({out}), prefix_ + name + "_bias");
    }

    void add_affine(const std::string& name, int width) {
        params_.emplace_back(Tensor<S>::full({width}, S(1)), prefix_ + name);
        params_.emplace_back(Tensor<S>({width}), prefix_ + name + "_beta");
    }

    std::string prefix_;
    std::vector<Param<S>> params_;
};

}  // namespace hoi
